"""Random monotone CFT compositions and an evaluator that works on the raw document.

The evaluator reads the JSON document directly and shares no code with the
package, so it can serve as an oracle for loading, splicing and MOCUS.
"""

import random

import numpy as np


def fm(fid, port, cls="content"):
    return {"id": fid, "name": fid, "class": cls, "port": port}


def random_composition(rng, max_literals=12):
    """A chain of 1-3 components; returns (doc, top, literals).

    Literals are qualified basic events plus IFMs on an unconnected inport.
    """
    n_comp = rng.randint(1, 3)
    budget = rng.randint(1, max_literals)
    per = [0] * n_comp
    for _ in range(budget):
        per[rng.randrange(n_comp)] += 1
    comps, conns, literals = [], [], []
    prev_ofms = []
    for i in range(n_comp):
        cid = f"C{i}"
        inports = ["in"] if i else []
        ifms, leaves = [], []
        if i == 0 and per[0] > 1 and rng.random() < 0.5:
            inports = ["ext"]
            ifms.append(fm("x", "ext"))
            leaves.append("x")
            literals.append(f"{cid}.x")
            per[0] -= 1
        if i:
            conns.append({"from": f"C{i - 1}.out", "to": f"{cid}.in"})
            for o in prev_ofms:
                if rng.random() < 0.8:
                    ifms.append(fm(o, "in"))
                    leaves.append(o)
        bes = []
        for k in range(per[i]):
            bid = f"b{k}"
            bes.append({"id": bid, "name": bid, "fit": float(rng.randint(1, 500))})
            leaves.append(bid)
            literals.append(f"{cid}.{bid}")
        if not leaves:
            bes.append({"id": "b0", "name": "b0", "fit": 1.0})
            leaves.append("b0")
            literals.append(f"{cid}.b0")
        gates, edges, pool = [], [], list(leaves)
        for g in range(rng.randint(1, 6)):
            gid = f"g{g}"
            kind = rng.choice(["AND", "OR"])
            k = min(len(pool), rng.randint(2, 3))
            if kind == "AND" and k < 2:
                kind = "OR"
            for src in rng.sample(pool, k):
                edges.append({"src": src, "dst": gid})
            gates.append({"id": gid, "kind": kind})
            pool.append(gid)
        ofms = []
        for o in range(rng.randint(1, 2)):
            oid = f"o{i}_{o}"
            ofms.append(fm(oid, "out"))
            # prefer recent gates so the trees get some depth
            src = pool[-1] if o == 0 else rng.choice(pool)
            edges.append({"src": src, "dst": oid})
        comps.append(
            {
                "id": cid,
                "inports": inports,
                "outports": ["out"],
                "cft": {"ifms": ifms, "ofms": ofms, "basic_events": bes, "gates": gates, "edges": edges},
            }
        )
        prev_ofms = [o["id"] for o in ofms]
    top = f"C{n_comp - 1}.{comps[-1]['cft']['ofms'][0]['id']}"
    return {"components": comps, "connections": conns}, top, literals


def evaluate_all(doc, top, literals):
    """Boolean vector of ``top`` over all 2**n literal assignments (bit i = literal i)."""
    n = len(literals)
    idx = np.arange(1 << n, dtype=np.int64)
    leaf = {lit: ((idx >> i) & 1).astype(bool) for i, lit in enumerate(literals)}
    comps = {c["id"]: c for c in doc["components"]}
    feeds = {}
    for c in doc["connections"]:
        feeds[tuple(c["to"].split("."))] = tuple(c["from"].split("."))
    memo = {}

    def node(cid, nid):
        key = (cid, nid)
        if key in memo:
            return memo[key]
        cft = comps[cid]["cft"]
        ins = [e["src"] for e in cft["edges"] if e["dst"] == nid]
        gate = next((g for g in cft["gates"] if g["id"] == nid), None)
        ifm = next((f for f in cft["ifms"] if f["id"] == nid), None)
        if gate is not None:
            vals = [node(cid, s) for s in ins]
            out = np.logical_and.reduce(vals) if gate["kind"] == "AND" else np.logical_or.reduce(vals)
        elif ifm is not None:
            up = feeds.get((cid, ifm["port"]))
            out = leaf[f"{cid}.{nid}"] if up is None else node(up[0], nid)
        elif any(f["id"] == nid for f in cft["ofms"]):
            out = node(cid, ins[0])
        else:
            out = leaf[f"{cid}.{nid}"]
        memo[key] = out
        return out

    return node(*top.split("."))


def minimal_true_sets(truth, literals):
    """Minimal satisfying assignments of a monotone function given as a truth vector."""
    n = len(literals)
    idx = np.arange(1 << n, dtype=np.int64)
    minimal = truth.copy()
    for i in range(n):
        has = ((idx >> i) & 1).astype(bool)
        minimal &= ~(has & truth[idx ^ (1 << i)])
    out = set()
    for m in np.flatnonzero(minimal):
        out.add(frozenset(literals[i] for i in range(n) if (int(m) >> i) & 1))
    return out


def seeded(seed):
    return random.Random(seed)
