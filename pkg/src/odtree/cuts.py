"""Static user cuts lower-bounding the misclassification count.

Two sources:

  * pigeonhole cuts: for any index set I holding at most one point per
    class and any leaf subset L, at least |I intersect L-entrants| - |L|
    of those points are misclassified, giving
    sum_{i in I} c_i >= sum_{i in I, l in L} e_il - |L|;
  * their distilled aggregate family: per-leaf capacity cuts against the
    largest class, per-leaf occupancy cuts when classes outnumber half
    the leaves, and the global bound sum c_i >= s_1 + ... + s_{Y-2^D}
    when classes outnumber leaves.

Everything is generated once, before solving; there is no separation
callback.  Cuts never exclude an integral feasible assignment, so adding
them cannot change the optimum.
"""

from dataclasses import dataclass

import numpy as np

from .milp import GE, USER_CUT, LinearConstraint
from .formulation import embed_warm_start


@dataclass(frozen=True)
class CutConfig:
    enable_pigeonhole: bool = True
    enable_aggregate: bool = True
    cap_factor: int = 5     # at most cap_factor * n pigeonhole cuts
    seed: int = 0

    def cap(self, n):
        return max(0, self.cap_factor * n)


def theorem3_cuts(partition, ancestors, vmap, config=None):
    """Sampled pigeonhole cuts: one random representative per class, with
    leaf subsets taken as singletons and single-leaf complements.

    Cuts whose right side can never be positive (|L| >= |I|) are skipped.
    At most config.cap(n) cuts are produced; sampling is seeded.
    """
    config = config or CutConfig()
    if not config.enable_pigeonhole:
        return []
    rng = np.random.default_rng(config.seed)
    leaves = list(vmap.leaves)
    L = len(leaves)
    li = {l: k for k, l in enumerate(leaves)}
    Y = partition.num_classes
    cap = config.cap(vmap.n)

    n_classes_hit = sum(1 for m in partition.members if len(m))
    subsets = [(l,) for l in leaves]
    if L > 1:
        subsets += [tuple(x for x in leaves if x != l) for l in leaves]
    # a cut with |L| >= |I| has a nonpositive right side: dominated, skip
    subsets = [s for s in subsets if len(s) < n_classes_hit]

    cuts = []
    seen = set()
    max_rounds = cap if cap else 0
    for _ in range(max_rounds):
        if len(cuts) >= cap or not subsets:
            break
        members = tuple(int(m[rng.integers(len(m))]) for m in partition.members if len(m))
        if members in seen:
            continue
        seen.add(members)
        for sub in subsets:
            if len(cuts) >= cap:
                break
            coeffs = {vmap.c[i]: 1.0 for i in members}
            for i in members:
                for l in sub:
                    coeffs[vmap.e[i, li[l]]] = coeffs.get(vmap.e[i, li[l]], 0.0) - 1.0
            cuts.append(LinearConstraint(coeffs, GE, -float(len(sub)), USER_CUT,
                                         name=f"pigeon_{len(cuts)}"))
        if all(len(m) <= 1 for m in partition.members):
            break  # only one possible representative set
    return cuts


def prop1_cuts(partition, vmap, config=None):
    """Aggregate lower-bound cuts from the sorted class sizes."""
    config = config or CutConfig()
    if not config.enable_aggregate:
        return []
    s = partition.sorted_sizes
    Y = partition.num_classes
    leaves = list(vmap.leaves)
    L = len(leaves)
    li = {l: k for k, l in enumerate(leaves)}
    n = vmap.n
    cuts = []
    # leaf capacity: a leaf holds at most s_Y correct points
    for l in leaves:
        coeffs = {vmap.c[i]: 1.0 for i in range(n)}
        for i in range(n):
            coeffs[vmap.e[i, li[l]]] = -1.0
        cuts.append(LinearConstraint(coeffs, GE, -float(s[-1]), USER_CUT,
                                     name=f"cap_{l}"))
    # leaf occupancy when classes fill at least the leaves
    if Y >= L:
        rhs = float(s[0] * (Y - L + 1))
        for l in leaves:
            coeffs = {}
            for i in range(n):
                coeffs[vmap.c[i]] = 1.0
                coeffs[vmap.e[i, li[l]]] = 1.0
            cuts.append(LinearConstraint(coeffs, GE, rhs, USER_CUT,
                                         name=f"occ_{l}"))
    # global pigeonhole bound when classes outnumber leaves
    if Y > L:
        rhs = float(sum(s[:Y - L]))
        cuts.append(LinearConstraint({vmap.c[i]: 1.0 for i in range(n)}, GE, rhs,
                                     USER_CUT, name="global_lb"))
    return cuts


def add_cuts(model, cuts):
    for cut in cuts:
        model.add_constraint(cut.coeffs, cut.sense, cut.rhs, tag=USER_CUT,
                             name=cut.name)


def verify_cuts_against(tree, dataset, cuts, vmap, params):
    """Evaluate cuts at the integral assignment induced by a real tree.

    Returns the violated cuts with magnitudes; must come back empty for
    any actual tree, since the cuts are valid for every feasible integral
    point.
    """
    values = embed_warm_start(tree, dataset, vmap, params)
    violations = []
    for cut in cuts:
        mag = cut.violation(values)
        if mag > 1e-9:
            violations.append((cut.name, float(mag)))
    return violations
