"""The pre-filtering expression language: parse, print, evaluate.

Filters select candidate documents *before* any distance is computed.
See grammar.md for the full reference.
"""

from bhakti import dsl

text = 'uid == "alice" && !(age < 30) || vip == true'
expr = dsl.parse(text)
print("input:    ", text)
print("ast:      ", expr)
print("canonical:", dsl.print_expr(expr), "\n")

documents = [
    {"uid": "alice", "age": 33.0},
    {"uid": "alice", "age": 21.0},
    {"uid": "bob", "age": 50.0, "vip": True},
    {"uid": "carol"},  # no age at all
]
for doc in documents:
    print(f"  {str(doc):48} -> {dsl.evaluate(expr, doc)}")

# total semantics: missing fields and type mismatches are false, never errors
print()
print("missing field:", dsl.evaluate(dsl.parse("age > 10"), {"uid": "x"}))
print("!missing field:", dsl.evaluate(dsl.parse("!(age > 10)"), {"uid": "x"}))
print("cross-type != :", dsl.evaluate(dsl.parse('age != "ten"'), {"age": 10.0}))

# syntax errors carry a byte offset and what was expected
try:
    dsl.parse("uid == ")
except Exception as exc:
    print("\nsyntax error:", exc)
