"""The ``regcheck`` command.

Subcommands are plain functions registered with :py:func:`subcommand`;
argh builds their options out of the signatures.  Options that every
subcommand shares (``--config``, ``--model``, ``--mock-script``...) are
read before dispatching and turn into a :py:class:`Context`.

A typical session::

    regcheck parse hipaa.txt --out checklist.json
    regcheck --mock-script replies.jsonl annotate checklist.json
    regcheck graphs checklist.json --taxonomy roles.tsv --ontology attrs.tsv
    regcheck judge cases.jsonl --method bm25-content --checklist checklist.json
    regcheck evaluate cases.jsonl judgments.jsonl
"""

import logging
import sys
from argparse import ArgumentParser
from dataclasses import dataclass
from typing import List, Optional

from argh import ArghParser, arg

from regcheck import evaluation, judge as judging, retrieve as retrieval
from regcheck.annotate import annotate_tree, extract_characteristics
from regcheck.checklist import (
    Checklist,
    DefinitionDictionary,
    build_checklist,
    checklist_counts,
    definitions_from_tree,
    load_checklist,
    read_definitions,
    save_checklist,
)
from regcheck.embeddings import embedding_provider_from_config
from regcheck.exceptions import ArgumentError, RegcheckError
from regcheck.gateway import Gateway, load_mock_script
from regcheck.graphs import (
    TableTaxonomy,
    WordNetTaxonomy,
    build_role_graph,
    graph_counts,
    ingest_attribute_ontology,
    read_defined_roles,
    read_ontology_file,
)
from regcheck.log import setup_log
from regcheck.regdoc import parse_document
from regcheck.settings import Config
from regcheck.time import dumps

log = logging.getLogger(__name__)


def subcommand(fn):
    """Decorate ``fn`` adding it to the list of subcommands."""
    if not hasattr(subcommand, "s"):
        subcommand.s = []
    subcommand.s.append(fn)
    return fn


@dataclass
class Context:
    """What the global options resolve to."""

    config: Config
    mock_script: Optional[str] = None
    _gateway: Optional[Gateway] = None

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            provider = load_mock_script(self.mock_script) if self.mock_script else None
            self._gateway = Gateway.from_config(self.config, provider=provider)
        return self._gateway

    def embeddings(self):
        return embedding_provider_from_config(self.config)

    def settings(self) -> judging.JudgeSettings:
        return judging.JudgeSettings.from_config(self.config)


_context: Optional[Context] = None


def context() -> Context:
    global _context
    if _context is None:
        _context = Context(Config())
    return _context


def global_options() -> ArgumentParser:
    parser = ArgumentParser(add_help=False)
    parser.add_argument("--config", help="INI file with a [regcheck] section")
    parser.add_argument("--provider-endpoint", help="Chat completion URL")
    parser.add_argument("--model", help="Model name sent to the provider")
    parser.add_argument("--mock-script", help="Answer prompts from this JSON lines script")
    parser.add_argument("--k", type=int, help="Candidates retrieved per event")
    parser.add_argument("--max-parallel", type=int, help="Concurrent requests")
    parser.add_argument("--seed", type=int, help="Seed of the hashing embeddings")
    parser.add_argument("--log-level", help="debug, info, warning or error")
    parser.add_argument("--log-file", help="Also log (verbosely) to this file")
    return parser


def make_context(flags) -> Context:
    config = Config.from_file(flags.config) if flags.config else Config()
    config = config.override(
        provider_endpoint=flags.provider_endpoint,
        model=flags.model,
        k=flags.k,
        max_parallel=flags.max_parallel,
        embedding_seed=flags.seed,
        log_level=flags.log_level,
    )
    setup_log(level=config.log_level, path=flags.log_file)
    return Context(config, mock_script=flags.mock_script)


def _write(text: str, out: str) -> Optional[str]:
    """Return ``text`` for printing when ``out`` is "-", else save it."""
    if out == "-":
        return text.rstrip("\n")
    with open(out, "w", encoding="utf-8") as stream:
        stream.write(text)
    log.info("Wrote %s", out)
    return None


def _save(checklist: Checklist, out: str) -> None:
    if out == "-":
        save_checklist(checklist, sys.stdout)
    else:
        save_checklist(checklist, out)
        log.info("Wrote %s", out)


@subcommand
@arg("regulation", help="Plain-text regulation, one clause per line")
@arg("--out", help='Checklist file to write ("-" for stdout)')
@arg("--root-label", help="Label of the root of the tree")
@arg("--definitions", help="term<TAB>definition file, instead of harvesting them")
def parse(
    regulation: str,
    *,
    out: str = "-",
    root_label: str = "HIPAA",
    definitions_section: str = "164.103",
    definitions: Optional[str] = None,
):
    """Parse a regulation into a checklist skeleton (no annotations yet)."""
    with open(regulation, encoding="utf-8") as stream:
        tree = parse_document(stream.read(), root_label=root_label)
    if definitions:
        found = read_definitions(definitions)
    elif definitions_section in tree:
        found = definitions_from_tree(tree, definitions_section)
    else:
        log.warning("No section %s; the checklist has no definitions", definitions_section)
        found = DefinitionDictionary()
    _save(build_checklist(tree, definitions=found), out)


@subcommand
@arg("checklist", help="Checklist written by the parse subcommand")
@arg("--out", help="Where to write the annotated checklist (default: in place)")
@arg("--report", help="Write the annotation report (transcripts, failures) here")
@arg("--leaf", help="Annotate only these leaves", nargs="*")
def annotate(
    checklist: str,
    *,
    out: Optional[str] = None,
    report: Optional[str] = None,
    leaf: Optional[List[str]] = None,
):
    """Ask the questionnaire about each leaf and store the annotations."""
    ctx = context()
    loaded = load_checklist(checklist)
    annotations, annotation_report = annotate_tree(
        ctx.gateway,
        loaded.tree,
        leaves=leaf or None,
        retry_limit=ctx.config.retry_limit,
        max_parallel=ctx.config.max_parallel,
    )
    kept = {a.leaf.canonical: a for a in loaded.annotations.values()}
    kept.update({a.leaf.canonical: a for a in annotations})
    annotated = build_checklist(
        loaded.tree,
        kept.values(),
        role_graph=loaded.role_graph,
        attribute_graph=loaded.attribute_graph,
        definitions=loaded.definitions,
    )
    annotation_report.flags.update(
        {k: list(a.flags) for k, a in annotated.annotations.items() if a.flags}
    )
    if report:
        annotation_report.save(report)
    _save(annotated, out or checklist)
    if annotation_report.failures:
        log.warning("%d leaves could not be annotated", len(annotation_report.failures))


@subcommand
@arg("checklist", help="Annotated checklist")
@arg("--taxonomy", help="child<TAB>parent file of roles")
@arg("--wordnet", help="Take role hypernyms from WordNet (needs nltk)")
@arg("--defined-roles", help="name<TAB>member file of roles the regulation defines")
@arg("--ontology", help="child<TAB>parent<TAB>kind file of information types")
@arg("--out", help="Where to write the checklist (default: in place)")
def graphs(
    checklist: str,
    *,
    taxonomy: Optional[str] = None,
    wordnet: bool = False,
    defined_roles: Optional[str] = None,
    ontology: Optional[str] = None,
    out: Optional[str] = None,
):
    """Build the role and attribute graphs of a checklist."""
    if bool(taxonomy) == wordnet:
        raise ArgumentError("taxonomy", "use either --taxonomy or --wordnet")
    loaded = load_checklist(checklist)
    tax = WordNetTaxonomy() if wordnet else TableTaxonomy.from_file(taxonomy)
    roles, types = [], []
    for annotation in loaded.annotations.values():
        if annotation.characteristics is not None:
            roles.extend(annotation.characteristics.roles())
            if annotation.characteristics.information_type:
                types.append(annotation.characteristics.information_type)
    role_graph = build_role_graph(
        roles, tax, read_defined_roles(defined_roles) if defined_roles else None
    )
    attribute_graph = ingest_attribute_ontology(
        read_ontology_file(ontology) if ontology else (), vertices=types
    )
    built = build_checklist(
        loaded.tree,
        loaded.annotations.values(),
        role_graph=role_graph,
        attribute_graph=attribute_graph,
        definitions=loaded.definitions,
    )
    _save(built, out or checklist)
    return dumps(
        {"roles": graph_counts(role_graph), "attributes": graph_counts(attribute_graph)},
        indent=1,
    )


@subcommand
@arg("checklist", help="Checklist file")
def stats(checklist: str):
    """Print tree statistics and checklist counts."""
    loaded = load_checklist(checklist)
    return dumps(
        {"tree": loaded.tree.stats.as_dict(), "checklist": checklist_counts(loaded)},
        indent=1,
    )


@subcommand
@arg("checklist", help="Annotated checklist")
@arg("event", help="Event description")
@arg("--method", choices=("bm25", "embedding", "agent"))
@arg("--explain", help="Query BM25 with an LLM explanation instead of the event")
def retrieve(checklist: str, event: str, *, method: str = "bm25", explain: bool = False):
    """Show the norms one retrieval method finds for an event."""
    ctx = context()
    loaded = load_checklist(checklist)
    k = ctx.config.k
    if method == "bm25":
        index = retrieval.build_bm25_index(
            retrieval.norm_corpus(loaded, ctx.config.corpus),
            ctx.config.bm25_k1,
            ctx.config.bm25_b,
        )
        query = retrieval.llm_explanation(ctx.gateway, event) if explain else event
        hits = retrieval.bm25_query(index, query, k)
    elif method == "embedding":
        characteristics = extract_characteristics(
            ctx.gateway, event, retry_limit=ctx.config.retry_limit
        )
        hits = retrieval.embedding_retrieve(
            loaded,
            characteristics,
            ctx.embeddings(),
            k,
            event=event,
            role_threshold=ctx.config.role_threshold,
            role_mode=ctx.config.role_mode,
            corpus=ctx.config.corpus,
        )
    else:
        hits = retrieval.agent_retrieve(ctx.gateway, loaded, event, k)
    for hit in hits:
        yield "{}\t{:.6f}".format(hit.leaf, hit.score)


@subcommand
@arg("cases", help="JSON lines case file")
@arg("--method", choices=tuple(m.value for m in judging.Method))
@arg("--checklist", help="Annotated checklist; the retrieval methods need it")
@arg("--out", help="JSON lines judgments file")
@arg("--resume", help="Keep the judgments already in --out and skip their cases")
def judge(
    cases: str,
    *,
    method: str = "dp",
    checklist: Optional[str] = None,
    out: str = "judgments.jsonl",
    resume: bool = False,
):
    """Judge every case of a file with one method."""
    ctx = context()
    records, _ = evaluation.load_cases(cases)
    chosen = judging.Method(method)
    loaded = load_checklist(checklist) if checklist else None
    done = []
    if resume:
        try:
            done = [
                j.case_id for j in judging.load_judgments(out) if j.method is chosen
            ]
        except FileNotFoundError:
            pass
    providers = judging.Providers(
        gateway=ctx.gateway,
        embeddings=ctx.embeddings() if chosen is judging.Method.CI_ES_CONTENT else None,
    )
    judgments = judging.judge_cases(
        chosen,
        providers,
        loaded,
        records,
        ctx.settings(),
        max_parallel=ctx.config.max_parallel,
        skip=done,
    )
    judging.save_judgments(judgments, out, append=resume)
    failed = sum(1 for j in judgments if j.parse_failed)
    log.info("%d judgments written to %s, %d parse failures", len(judgments), out, failed)


@subcommand
@arg("cases", help="JSON lines case file with the gold labels")
@arg("judgments", help="JSON lines judgments file")
@arg("--format", choices=evaluation.FORMATS)
@arg("--out", help='Report file ("-" for stdout)')
def evaluate(cases: str, judgments: str, *, format: str = "text", out: str = "-"):
    """Compute accuracy, precision, recall and F1 per method."""
    records, _ = evaluation.load_cases(cases)
    report = evaluation.evaluate(judging.load_judgments(judgments), records)
    return _write(evaluation.render_report(report, format), out)


def cli(argv: Optional[List[str]] = None) -> int:
    """Run the command line; return the exit code.

    0 on success, 1 when the pipeline fails, 2 on a usage error.
    """
    global _context
    argv = list(sys.argv[1:] if argv is None else argv)
    options = global_options()
    parser = ArghParser(
        prog="regcheck",
        description="Check events against privacy regulations.",
        parents=[options],
    )
    parser.add_commands(sorted(subcommand.s, key=lambda f: f.__name__))
    try:
        flags, rest = options.parse_known_args(argv)
        _context = make_context(flags)
        parser.dispatch(argv=rest, output_file=sys.stdout, errors_file=sys.stderr)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except (RegcheckError, OSError) as e:
        log.error("%s", e)
        return 1
    finally:
        _context = None
    return 0


def command() -> None:
    """Entry point of the ``regcheck`` script."""
    sys.exit(cli())
