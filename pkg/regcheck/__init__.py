"""regcheck: check events against a privacy regulation.

The regulation is parsed into a tree of clauses, each leaf is annotated
as a permission, a prohibition or a definition together with who may
send what about whom, and events are then judged by prompting a
language model, optionally with the norms retrieved for them.
"""
