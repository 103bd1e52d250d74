"""Dialogue memory: store conversation turns under weighted embeddings,
recall them later filtered to one (user, bot) pair.

The weighted sum V = w_q * embed(query) + w_a * embed(answer) decides what
a memory "is about": weight the answer heavier and the memory is found by
questions resembling the *answer*; weight the query heavier and it is
found by questions resembling the original *question*.
"""

from bhakti import Engine, Weights, memorize_conversation, recall_memories_templated, toy_embedder
from bhakti.memory import recall_records, weighted_embedding
from bhakti.metrics import cosine_distance

embedder = toy_embedder(32)  # deterministic stand-in for a real embedding model
store = Engine()

turns = [
    ("Hi, my name is Test", "Nice to meet you, Test."),
    ("I have a wife, a son and a dog.", "Sounds like a loving family."),
    ("My car is designed in Japan.", "A stylish choice."),
    ("My job is writing Python software.", "A versatile language for that."),
]
clock = iter(range(1_700_000_000, 1_700_000_100)).__next__
for q, a in turns:
    memorize_conversation(q, a, "user-1", "bot-1", embedder, store, clock=clock)
memorize_conversation("Other user's secret", "...", "user-2", "bot-1", embedder, store, clock=clock)

print("memories for user-1 about family:")
for line in recall_memories_templated(
    "I have a wife, a son and a dog. Remember?", 2, "cosine", "user-1", "bot-1", embedder, store
):
    print("  ", line)

print("\nthe other user's memory never leaks in:")
hits = recall_records("secret", 10, "cosine", "user-1", "bot-1", embedder, store)
print("  recalled queries:", [r.query for r, _ in hits])

# the geometry behind the weights
v_q = embedder.embed("the question text")
v_a = embedder.embed("the answer text")
for w in (Weights(0.9, 0.1), Weights(0.5, 0.5), Weights(0.1, 0.9)):
    v = weighted_embedding(v_q, v_a, w)
    print(
        f"\nw_q={w.w_q}, w_a={w.w_a}: "
        f"dist(V, V_Q)={cosine_distance(v, v_q):.3f}, "
        f"dist(V, V_A)={cosine_distance(v, v_a):.3f}"
    )
print("\n-> the heavier side is always the closer one")
