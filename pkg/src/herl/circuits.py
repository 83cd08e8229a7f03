"""Homomorphic circuits for the learning-rule updates.

Each rule takes the client's role ciphertexts (all fresh at one level and one
scale) and evaluates the update expression with tensor products accumulated
at a common scale, one relinearization of the accumulated product, and the
rescales at the end. Multiply-by-one plaintexts at computed scales align
addition operands exactly; they change nothing about the decrypted value.

Declared depths are the levels each rule consumes; configuration validation
rejects parameter sets whose chain cannot cover them.
"""

import math

from herl import ckks
from herl.errors import StructuralError

DECLARED_DEPTH = {"td0": 2, "sarsa": 2, "z": 5, "q_backup": 2}

TD_ROLES = ("v", "vp", "alpha", "gamma", "r")
SARSA_ROLES = ("q", "qp", "alpha", "gamma", "r")
Z_ROLES = ("z", "zp", "alpha", "l")


def _require(cts, roles):
    missing = [r for r in roles if r not in cts]
    if missing:
        raise StructuralError(f"request is missing role(s) {missing}")
    levels = {cts[r].level for r in roles}
    scales = {cts[r].log_scale for r in roles}
    if len(levels) != 1 or len(scales) != 1:
        raise StructuralError("role ciphertexts disagree on level or scale")
    return levels.pop(), scales.pop()


def _ones(params, level, dlog):
    return ckks.encode_const(1.0, dlog, params, level=level)


def td_rule(cts, eval_keys):
    """c_v + c_alpha*c_r + c_alpha*c_gamma*c_v' - c_alpha*c_v, depth 2."""
    level, d = _require(cts, TD_ROLES)
    if level < 2:
        raise StructuralError("td0 rule needs two levels of headroom")
    params = eval_keys.params
    one_d = _ones(params, level, d)
    one_2d = _ones(params, level, 2 * d)
    ag = ckks.tensor_relinearize(ckks.tensor_raw(cts["alpha"], cts["gamma"]),
                                 eval_keys)
    t_agv = ckks.tensor_raw(ag, cts["vp"])
    t_ar = ckks.tensor_pt_mul(ckks.tensor_raw(cts["alpha"], cts["r"]), one_d)
    t_av = ckks.tensor_pt_mul(ckks.tensor_raw(cts["alpha"], cts["v"]), one_d)
    cv = ckks.pt_mul(cts["v"], one_2d)
    acc = ckks.tensor_add(ckks.tensor_add(ckks.tensor_add(t_agv, cv), t_ar),
                          t_av, negate=True)
    out = ckks.tensor_relinearize(acc, eval_keys)
    return ckks.rescale(ckks.rescale(out))


def sarsa_rule(cts, eval_keys):
    """The td0 circuit with c_Q / c_Q' in place of c_v / c_v'."""
    level, _ = _require(cts, SARSA_ROLES)
    renamed = {"v": cts["q"], "vp": cts["qp"], "alpha": cts["alpha"],
               "gamma": cts["gamma"], "r": cts["r"]}
    return td_rule(renamed, eval_keys)


def _mul_rescaled(c1, c2, eval_keys):
    return ckks.rescale(ckks.tensor_relinearize(ckks.tensor_raw(c1, c2),
                                                eval_keys))


def z_rule(cts, eval_keys, degree=5):
    """Z(s) + alpha*(taylor_k(-l)*Z(s') - Z(s)) with exp via a power tree.

    Powers of x = -l are built by binary squaring (depth ceil(log2 k)), each
    multiplied by alpha*Z(s') and a plaintext 1/i! coefficient; total depth
    ceil(log2 k) + 2 = 5 for the default degree 5. The power chain runs at
    the lowest levels that still feed the final rescale, which keeps the
    relinearizations on small active prime sets.
    """
    if degree != 5:
        raise ValueError("the homomorphic Taylor circuit is built for k=5")
    level, d = _require(cts, Z_ROLES)
    if level < DECLARED_DEPTH["z"]:
        raise StructuralError("z rule needs five levels of headroom")
    params = eval_keys.params
    x = ckks.drop_to(ckks.he_neg(cts["l"]), level - 1)
    x2 = _mul_rescaled(x, x, eval_keys)
    x3 = _mul_rescaled(x2, ckks.drop_to(x, x2.level), eval_keys)
    x4 = _mul_rescaled(x2, x2, eval_keys)
    x5 = _mul_rescaled(x4, ckks.drop_to(x, x4.level), eval_keys)
    lvl = x5.level  # = level - 4; the accumulator needs one rescale after it
    w = _mul_rescaled(ckks.drop_to(cts["alpha"], lvl + 1),
                      ckks.drop_to(cts["zp"], lvl + 1), eval_keys)

    powers = {1: ckks.drop_to(x, lvl), 2: ckks.drop_to(x2, lvl),
              3: ckks.drop_to(x3, lvl), 4: ckks.drop_to(x4, lvl), 5: x5}
    terms = {i: ckks.tensor_raw(w, powers[i]) for i in powers}
    # pad keeps every alignment factor a representable plaintext scale
    target = max(t.log_scale for t in terms.values()) + ckks.MIN_LOG_SCALE + 1

    acc = None
    for i, t in terms.items():
        coeff = 1.0 / math.factorial(i)
        pt = ckks.encode_const(coeff, target - t.log_scale, params, level=lvl)
        aligned = ckks.tensor_pt_mul(t, pt)
        aligned.log_scale = target
        acc = aligned if acc is None else ckks.tensor_add(acc, aligned)
    # i = 0 term: w itself, plus the Z(s) and alpha*Z(s) terms
    w_term = ckks.raise_scale(w, target)
    z_term = ckks.raise_scale(ckks.drop_to(cts["z"], lvl), target)
    az = ckks.tensor_raw(ckks.drop_to(cts["alpha"], lvl),
                         ckks.drop_to(cts["z"], lvl))
    az = ckks.tensor_pt_mul(az, _ones(params, lvl, target - az.log_scale))
    az.log_scale = target
    acc = ckks.tensor_add(ckks.tensor_add(acc, w_term), z_term)
    acc = ckks.tensor_add(acc, az, negate=True)
    out = ckks.tensor_relinearize(acc, eval_keys)
    return ckks.rescale(out)


def q_backup_rule(cts, eval_keys, n_states, n_actions):
    """c_Q(s,a) = sum_s' c_P [c_R + c_gamma c_V(s')]; one output per action."""
    roles = ["gamma"]
    roles += [f"v:{j}" for j in range(n_states)]
    roles += [f"r:{a}" for a in range(n_actions)]
    roles += [f"p:{a}:{j}" for a in range(n_actions) for j in range(n_states)]
    level, d = _require(cts, roles)
    if level < 2:
        raise StructuralError("q_backup rule needs two levels of headroom")
    params = eval_keys.params
    one_d = _ones(params, level, d)
    gv = {j: ckks.tensor_relinearize(
        ckks.tensor_raw(cts["gamma"], cts[f"v:{j}"]), eval_keys)
        for j in range(n_states)}
    outs = {}
    for a in range(n_actions):
        r2 = ckks.pt_mul(cts[f"r:{a}"], one_d)
        acc = None
        for j in range(n_states):
            inner = ckks.he_add(gv[j], r2)
            term = ckks.tensor_raw(cts[f"p:{a}:{j}"], inner)
            acc = term if acc is None else ckks.tensor_add(acc, term)
        out = ckks.tensor_relinearize(acc, eval_keys)
        outs[f"q:{a}"] = ckks.rescale(ckks.rescale(out))
    return outs
