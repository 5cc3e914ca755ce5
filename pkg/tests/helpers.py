"""Builders shared by the test modules: the mini regulation and its checklist."""

from pathlib import Path

from regcheck.checklist import (
    CICharacteristics,
    ConsentForm,
    NormAnnotation,
    NormType,
    ReferenceRelation,
    RelationKind,
    build_checklist,
    definitions_from_tree,
)
from regcheck.graphs import (
    TableTaxonomy,
    build_role_graph,
    ingest_attribute_ontology,
    read_defined_roles,
    read_ontology_file,
)
from regcheck.regdoc import parse_document, parse_regulation_id

FIXTURES = Path(__file__).parent / "fixtures"


def fixture(name: str) -> str:
    return str(FIXTURES / name)


def mini_text() -> str:
    return (FIXTURES / "mini_regulation.txt").read_text(encoding="utf-8")


def mini_tree():
    return parse_document(mini_text())


def _norm(leaf, norm_type, relations=(), **chars):
    return NormAnnotation(
        leaf=parse_regulation_id(leaf),
        norm_type=norm_type,
        characteristics=CICharacteristics(**chars),
        reference_relations=tuple(
            ReferenceRelation(parse_regulation_id(t), k) for t, k in relations
        ),
    )


def mini_annotations():
    phi = "protected health information"
    return [
        NormAnnotation(parse_regulation_id("164.103(a)"), NormType.GENERAL_DEFINITION),
        NormAnnotation(parse_regulation_id("164.103(b)"), NormType.GENERAL_DEFINITION),
        _norm(
            "164.502(a)(1)(i)",
            NormType.POSITIVE,
            sender_role="covered entity",
            recipient_role="patient",
            subject_role="patient",
            information_type=phi,
        ),
        _norm(
            "164.502(a)(1)(ii)",
            NormType.POSITIVE,
            [("164.506", RelationKind.SUPPORT)],
            sender_role="covered entity",
            recipient_role="health care provider",
            information_type=phi,
            purpose="treatment",
        ),
        _norm(
            "164.502(a)(1)(iv)",
            NormType.POSITIVE,
            [
                ("164.508", RelationKind.SUPPORT),
                ("164.502(a)(5)(i)", RelationKind.EXCEPTION),
            ],
            sender_role="covered entity",
            information_type=phi,
            consent_form=ConsentForm.AUTHORIZATION,
            purpose="purposes named in the authorization",
        ),
        _norm(
            "164.502(a)(5)(i)",
            NormType.NEGATIVE,
            sender_role="health plan",
            information_type="genetic information",
            purpose="underwriting",
        ),
        _norm(
            "164.506(a)",
            NormType.POSITIVE,
            sender_role="covered entity",
            recipient_role="health care provider",
            information_type=phi,
            purpose="treatment",
        ),
        _norm(
            "164.508(a)",
            NormType.NEGATIVE,
            sender_role="covered entity",
            information_type="psychotherapy notes",
            consent_form=ConsentForm.AUTHORIZATION,
        ),
    ]


def mini_role_graph(roles=None):
    if roles is None:
        roles = ["covered entity", "patient", "health care provider", "health plan"]
    return build_role_graph(
        roles,
        TableTaxonomy.from_file(fixture("taxonomy.tsv")),
        read_defined_roles(fixture("defined_roles.tsv")),
    )


def mini_checklist(tree=None):
    tree = tree or mini_tree()
    annotations = mini_annotations()
    return build_checklist(
        tree,
        annotations,
        role_graph=mini_role_graph(),
        attribute_graph=ingest_attribute_ontology(
            read_ontology_file(fixture("ontology.tsv")),
            vertices=[
                a.characteristics.information_type
                for a in annotations
                if a.characteristics and a.characteristics.information_type
            ],
        ),
        definitions=definitions_from_tree(tree),
    )
