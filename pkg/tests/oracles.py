"""Independent oracle implementations used by the test suite.

Everything here deliberately avoids the package's own code paths: the
grounder enumerates the full atom universe instead of using a worklist, the
grid searches evaluate the objective from scratch on packed arrays, the
LP reference goes through scipy, metrics go through sklearn, and gradients
come from central finite differences.
"""

import itertools

import numpy as np
from scipy.optimize import linprog
from sklearn.metrics import f1_score

from kgrefine.embed.train import loss_and_grads


# ---------------------------------------------------------------------------
# Naive full-enumeration grounder (oracle for the lazy worklist grounder)


def _norm(a, b):
    return (a, b) if a <= b else (b, a)


def naive_ground_canonical(kg, weights, feedback=None, feedback_weight=1.0):
    """Canonical rule multiset by brute-force enumeration to a fixpoint.

    Enumerates every template against the full entity/relation/label
    universe on every pass, keeping rules whose variable body atom is known,
    until no new head atoms appear.  Returns the same canonical tuples as
    GroundProgram.canonical_rules().
    """
    onto = kg.ontology
    entities = range(len(kg.entities))
    known = set()
    rules = set()

    for f in kg.facts:
        key = ("rel",) + f.key
        known.add(key)
        for source, conf in f.confidences:
            if weights.w_cand_rel(source) > 0:
                rules.add(("cand_rel", ((("candrel", source) + f.key, conf),), (),
                           key, False, weights.w_cand_rel(source)))
    for lf in kg.label_facts:
        key = ("lbl",) + lf.key
        known.add(key)
        for source, conf in lf.confidences:
            if weights.w_cand_lbl(source) > 0:
                rules.add(("cand_lbl", ((("candlbl", source) + lf.key, conf),), (),
                           key, False, weights.w_cand_lbl(source)))
    if feedback is not None:
        source = f"feedback-iter-{feedback.iteration}"
        for (s, r, o), score in list(feedback.positive) + list(feedback.negative):
            key = ("rel", s, r, o)
            known.add(key)
            if feedback_weight > 0:
                rules.add(("cand_rel", ((("candrel", source, s, r, o), score),), (),
                           key, False, feedback_weight))

    inv_pairs = sorted({_norm(a, b) for a, b in onto.inv})
    mut_pairs = sorted({_norm(a, b) for a, b in onto.mut})
    rmut_pairs = sorted({_norm(a, b) for a, b in onto.rmut})
    sameent = sorted((pair, score) for pair, score in onto.sameent.items())

    def directions(pairs):
        for a, b in pairs:
            yield a, b, (a, b)
            if a != b:
                yield b, a, (a, b)

    while True:
        new_rules = set()

        def emit(template, obs, body, head, negated, weight):
            if weight > 0 and body in known:
                new_rules.add((template, obs, (body,), head, negated, weight))

        for r, l in sorted(onto.dom.items()):
            for e1, e2 in itertools.product(entities, entities):
                emit("dom", ((("dom", r, l), 1.0),), ("rel", e1, r, e2),
                     ("lbl", e1, l), False, weights.selectional_preference)
        for r, l in sorted(onto.rng.items()):
            for e1, e2 in itertools.product(entities, entities):
                emit("rng", ((("rng", r, l), 1.0),), ("rel", e1, r, e2),
                     ("lbl", e2, l), False, weights.selectional_preference)
        for r, sup in sorted(onto.rsub):
            for e1, e2 in itertools.product(entities, entities):
                emit("rsub", ((("rsub", r, sup), 1.0),), ("rel", e1, r, e2),
                     ("rel", e1, sup, e2), False, weights.subsumption)
        for c, p in sorted(onto.sub):
            for e in entities:
                emit("sub", ((("sub", c, p), 1.0),), ("lbl", e, c),
                     ("lbl", e, p), False, weights.subsumption)
        for a, b, pair in directions(inv_pairs):
            for e1, e2 in itertools.product(entities, entities):
                emit("inv", ((("inv",) + pair, 1.0),), ("rel", e1, a, e2),
                     ("rel", e2, b, e1), False, weights.inverse)
        for a, b, pair in directions(rmut_pairs):
            for e1, e2 in itertools.product(entities, entities):
                emit("rmut", ((("rmut",) + pair, 1.0),), ("rel", e1, a, e2),
                     ("rel", e1, b, e2), True, weights.mutual_exclusion)
        for a, b, pair in directions(mut_pairs):
            for e in entities:
                emit("mut", ((("mut",) + pair, 1.0),), ("lbl", e, a),
                     ("lbl", e, b), True, weights.mutual_exclusion)
        for (pa, pb), score in sameent:
            for u, v in ((pa, pb), (pb, pa)):
                tag = (("sameent", pa, pb), score)
                for l in range(len(kg.labels)):
                    emit("er_lbl", (tag,), ("lbl", u, l), ("lbl", v, l), False,
                         weights.entity_resolution)
                for r in range(len(kg.relations)):
                    for x in entities:
                        emit("er_rel_subj", (tag,), ("rel", u, r, x), ("rel", v, r, x),
                             False, weights.entity_resolution)
                        emit("er_rel_obj", (tag,), ("rel", x, r, u), ("rel", x, r, v),
                             False, weights.entity_resolution)

        added = new_rules - rules
        if not added:
            break
        rules |= added
        for rule in added:
            known.add(rule[3])

    if weights.negative_prior_weight > 0:
        for key in known:
            rules.add(("neg_prior", ((("prior",), 1.0),), (), key, True,
                       weights.negative_prior_weight))
    return sorted(rules)


# ---------------------------------------------------------------------------
# Grid-search oracles for the MAP objective


def dense_matrix(packed):
    A = np.zeros((packed.n_rules, packed.n_vars))
    for j in range(packed.n_rules):
        lo, hi = packed.indptr[j], packed.indptr[j + 1]
        A[j, packed.var_idx[lo:hi]] = packed.coefs[lo:hi]
    return A


def objective_at(packed, points):
    """Objective values at a (m, n_vars) array of points."""
    A = dense_matrix(packed)
    z = points @ A.T + packed.bias
    d = np.maximum(z, 0.0)
    if packed.power == 2:
        d = d * d
    return d @ packed.weights


def grid_min(packed, resolution=0.01, chunk=2_000_000):
    """Exhaustive minimum over the uniform grid at the given resolution."""
    n = packed.n_vars
    if n == 0:
        return float(objective_at(packed, np.zeros((1, 0)))[0])
    m = int(round(1.0 / resolution)) + 1
    axis = np.linspace(0.0, 1.0, m)
    A = dense_matrix(packed)
    total = m ** n
    best = np.inf
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        pts = np.empty((len(idx), n))
        rem = idx
        for d in range(n - 1, -1, -1):
            pts[:, d] = axis[rem % m]
            rem = rem // m
        z = pts @ A.T + packed.bias
        dd = np.maximum(z, 0.0)
        if packed.power == 2:
            dd = dd * dd
        best = min(best, float((dd @ packed.weights).min()))
    return best


def grid_refine_min(packed, resolution=0.01, coarse=0.1, n_starts=5):
    """Coarse-to-fine multistart grid minimum, restricted to the fine lattice.

    Every evaluated point lies on the ``resolution`` lattice, so the result
    upper-bounds the exhaustive grid minimum; on these convex objectives the
    refinement recovers it (validated against grid_min for small programs).
    """
    n = packed.n_vars
    if n == 0:
        return grid_min(packed, resolution)

    def lattice(points):
        return np.clip(np.round(points / resolution) * resolution, 0.0, 1.0)

    m = int(round(1.0 / coarse)) + 1
    axis = np.linspace(0.0, 1.0, m)
    pts = np.array(list(itertools.product(axis, repeat=n)))
    values = objective_at(packed, pts)
    order = np.argsort(values, kind="stable")[:n_starts]
    centers = pts[order]

    for step in (coarse / 5.0, resolution):
        offsets = np.arange(-5, 6) * step
        best_pts = []
        for c in centers:
            local = np.array(list(itertools.product(*[c[d] + offsets for d in range(n)])))
            local = lattice(local)
            vals = objective_at(packed, local)
            best_pts.append(local[np.argmin(vals)])
        centers = np.array(best_pts)

    return float(objective_at(packed, lattice(centers)).min())


def lp_min(packed):
    """Exact LP optimum for hinge power 1 via scipy linprog (highs)."""
    assert packed.power == 1
    n, n_rules = packed.n_vars, packed.n_rules
    A = dense_matrix(packed)
    c = np.concatenate([np.zeros(n), packed.weights])
    res = linprog(c, A_ub=np.hstack([A, -np.eye(n_rules)]), b_ub=-packed.bias,
                  bounds=[(0, 1)] * n + [(0, None)] * n_rules, method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


# ---------------------------------------------------------------------------
# Finite-difference gradients


def fd_gradients(model, s, r, o, y, l2_reg, eps=1e-4):
    """Central finite differences of the batch loss for every block."""
    grads = {}
    for name, block in model.params.items():
        g = np.zeros_like(block)
        flat = block.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_and_grads(model, s, r, o, y, l2_reg)[0]
            flat[i] = orig - eps
            down = loss_and_grads(model, s, r, o, y, l2_reg)[0]
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        grads[name] = g
    return grads


# ---------------------------------------------------------------------------
# Metrics


def sklearn_weighted_f1(y_true, y_pred):
    """(wf1, pos_f1, neg_f1) via sklearn's confusion-based implementation."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    pos = f1_score(y_true, y_pred, pos_label=1, zero_division=0)
    neg = f1_score(y_true, y_pred, pos_label=0, zero_division=0)
    w1 = float((y_true == 1).mean())
    w0 = float((y_true == 0).mean())
    return w1 * pos + w0 * neg, pos, neg


def mc_clamped_gaussian_mean(mean, std, lo=0.01, hi=0.99, n=2_000_000, seed=1234):
    """Monte-Carlo estimate of E[clip(N(mean, std), lo, hi)]."""
    rng = np.random.default_rng(seed)
    return float(np.clip(rng.normal(mean, std, size=n), lo, hi).mean())
