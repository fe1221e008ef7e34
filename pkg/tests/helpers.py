import numpy as np

from kgan.scorers import init_model
from kgan.tensor import make_rng


def make_model(kind, n_entities=6, n_relations=3, dim=4, norm="l1", seed=0, dtype=np.float64):
    """A model with every parameter slot randomized (not just the default init)."""
    rng = make_rng(seed)
    model = init_model(kind, n_entities, n_relations, dim, norm, rng, dtype=dtype)
    for name, arr in model.params.items():
        arr[...] = rng.uniform(-0.8, 0.8, size=arr.shape)
    return model


def write_tsv(path, rows):
    path.write_text("".join("\t".join(map(str, r)) + "\n" for r in rows), encoding="utf-8")
    return path


def scorer_gradient_error(kind, norm, rng, dim=4, n_entities=5, n_relations=2):
    """Relative error ``|g_fd - g| / max(|g_fd|, |g|)`` of the analytic score gradient.

    Draws one random model and triple whose residual coordinates are all at
    least 1e-2 away from zero, so no L1 kink lies within the difference step,
    and whose residual has L2 norm at least 0.1, keeping the curvature of the
    L2 norm (which blows up at its kink, v = 0) small enough for a 1e-3 step.
    The vectors span every coordinate of every row the triple touches.
    """
    from kgan.scorers import _residual, score_gradient
    from oracles import finite_difference, scalar_score

    while True:
        model = make_model(kind, n_entities, n_relations, dim, norm,
                           seed=int(rng.integers(1 << 30)))
        h, r, t = (int(x) for x in rng.integers(0, [n_entities, n_relations, n_entities]))
        v, _ = _residual(model, np.array([h]), np.array([r]), np.array([t]))
        if np.abs(v).min() >= 1e-2 and np.linalg.norm(v) >= 0.1:
            break
    analytic = score_gradient(model, h, r, t).dense(model)
    fds, ans = [], []
    for slot, arr in model.params.items():
        rows = {h, t} if arr.shape[0] == n_entities else {r}
        for row in sorted(rows):
            for idx in np.ndindex(arr.shape[1:]):
                full = (row,) + idx
                fds.append(finite_difference(lambda: scalar_score(model, h, r, t),
                                             model.params, slot, full))
                ans.append(analytic[slot][full])
    fds, ans = np.array(fds), np.array(ans)
    return float(np.linalg.norm(fds - ans) / max(np.linalg.norm(fds), np.linalg.norm(ans)))


def generator_gradient_error(rng, n_entities=7, n_relations=2, dim=3, hidden=6, batch=3,
                             n_coords=24, step=1e-3):
    """Worst relative error of the generator log-probability gradient on random coordinates.

    Points whose hidden pre-activations come within 0.05 of a ReLU kink are
    redrawn; one difference step cannot cross a kink from there.
    """
    from kgan.generator import _forward, _input_ids, init_generator, log_prob_gradient
    from oracles import finite_difference

    while True:
        gen = init_generator(n_entities, n_relations, dim, hidden,
                             make_rng(int(rng.integers(1 << 30))), dtype=np.float64)
        for name in ("b1", "b2"):
            gen.params[name][...] = rng.uniform(-0.5, 0.5, size=gen.params[name].shape)
        pos = rng.integers(0, [n_entities, n_relations, n_entities], size=(batch, 3))
        replace_head = rng.random(batch) < 0.5
        ent, rel = _input_ids(gen, pos, replace_head)
        if np.abs(_forward(gen, ent, rel)["pre"]).min() > 0.05:
            break
    sampled = rng.integers(0, n_entities, size=batch)
    coef = rng.uniform(-1, 1, size=batch)

    def objective():
        logp = _forward(gen, ent, rel)["logp"]
        return float((coef * logp[np.arange(batch), sampled]).sum())

    analytic = log_prob_gradient(gen, pos, replace_head, sampled, coef)
    slots = sorted(gen.params)
    worst = 0.0
    for k in range(n_coords):
        slot = slots[k % len(slots)]
        arr = gen.params[slot]
        if slot == "entity":
            idx = (int(rng.choice(ent)), int(rng.integers(arr.shape[1])))
        elif slot == "relation":
            idx = (int(rng.choice(rel)), int(rng.integers(arr.shape[1])))
        else:
            idx = tuple(int(rng.integers(s)) for s in arr.shape)
        fd = finite_difference(objective, gen.params, slot, idx, step=step)
        an = analytic[slot][idx]
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-3))
    return worst
