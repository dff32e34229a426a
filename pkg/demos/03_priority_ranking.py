"""
Ranking volumes for human revision
==================================

Attention-size per volume becomes a priority list; the top fraction is
selected for revision, never fewer than one while the pool is non-empty.
"""

import numpy as np

from atlasforge.ranking import (
    build_priority_list,
    from_jsonl,
    select_count,
    select_top,
    to_jsonl,
)

# fake attention sizes for a pool of 20 volumes
rng = np.random.default_rng(11)
sizes = {f"vol-{i:03d}": float(x) for i, x in enumerate(rng.uniform(0, 500, 20))}

entries = build_priority_list(sizes, class_id=7)
print("top of the list:")
for e in entries[:3]:
    print(f"  rank {e.rank}: {e.volume_id} size {e.attention_size:.1f}")

# 5 percent of 20 still selects one volume: ceil with a floor of one
sel = select_top(entries, fraction=0.05)
print("selected at 5%:", sorted(sel.selected))
for pool in (1, 4, 19, 20, 100):
    print(f"  pool {pool:3d} -> select {select_count(pool, 0.05)}")

# the list serializes to JSONL and round-trips
text = to_jsonl(entries, selected=sel.selected)
again = from_jsonl(text)
assert [e.volume_id for e in again] == [e.volume_id for e in entries]
print("JSONL round-trip:", len(text.splitlines()), "records")
