"""Experiment runner.

Subcommands:
  run           theorem-bound VI runs and encrypted-vs-plain learning runs
  list-presets  encryption parameter presets
  bench         per-phase wall time of one update (encode/encrypt/eval/decrypt)
  kernel-bench  compiled vs pure-python kernel comparison

Artifacts land in --out (default $HERL_OUT or ./runs/<name>): value-map CSV,
error-trace CSV, theorem report for VI modes, and a manifest.ini that fully
reproduces the run (herl run --config manifest.ini).
"""

import argparse
import configparser
import os
import pathlib
import subprocess
import sys
import time

import numpy as np

from herl import __version__, ckks, dp, kernels, mdp, protocol, tdlearn
from herl.backend import make_backend
from herl.circuits import DECLARED_DEPTH
from herl.errors import ConfigError
from herl.mdp import GridWorldConfig, Hyperparams
from herl.presets import PRESETS, get_preset, preset_params

VI_ALGOS = ("vi-sync", "vi-sync-noisy", "vi-async", "vi-async-noisy")
LEARN_ALGOS = ("td0", "sarsa", "z")
DEFAULT_EPISODES = {"td0": 5000, "sarsa": 15000, "z": 5000}


def _version_string():
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty"],
                              capture_output=True, text=True, timeout=5,
                              cwd=pathlib.Path(__file__).parent)
        git = desc.stdout.strip() if desc.returncode == 0 else ""
    except Exception:
        git = ""
    base = f"herl {__version__} (kernels: {kernels.implementation()})"
    return f"{base} {git}".strip()


def _out_dir(args, name):
    if args.out:
        path = pathlib.Path(args.out)
    else:
        root = pathlib.Path(os.environ.get("HERL_OUT", "runs"))
        path = root / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(path, args, grid_cfg, extra=None):
    cp = configparser.ConfigParser()
    run = {
        "algo": args.algo,
        "backend": args.backend,
        "preset": args.preset,
        "eps": repr(args.eps),
        "gamma": repr(args.gamma),
        "episodes": str(args.episodes),
        "iters": str(args.iters),
        "seed": str(args.seed),
        "key_seed": str(args.key_seed),
        "noise_mode": args.noise_mode,
        "order": args.order,
        "max_updates": str(args.max_updates),
        "two_process": str(args.two_process),
        "circuit_privacy": str(args.circuit_privacy),
        "version": _version_string(),
    }
    cp["run"] = run
    cp["grid"] = {
        "width": str(grid_cfg.width),
        "height": str(grid_cfg.height),
        "start": f"{grid_cfg.start[0]},{grid_cfg.start[1]}",
        "goal": f"{grid_cfg.goal[0]},{grid_cfg.goal[1]}",
        "traps": ";".join(f"{r},{c}" for r, c in grid_cfg.traps),
        "gamma": repr(grid_cfg.gamma),
        "reward_seed": str(grid_cfg.reward_seed),
        "step_reward_low": repr(grid_cfg.step_reward_low),
        "step_reward_high": repr(grid_cfg.step_reward_high),
        "goal_reward": repr(grid_cfg.goal_reward),
        "trap_reward": repr(grid_cfg.trap_reward),
        "max_episode_steps": str(grid_cfg.max_episode_steps),
    }
    if extra:
        cp["results"] = {k: str(v) for k, v in extra.items()}
    with open(path, "w") as fh:
        cp.write(fh)


def _load_config_defaults(args, parser):
    cp = configparser.ConfigParser()
    if not cp.read(args.config):
        raise ConfigError(f"cannot read config {args.config}")
    run = cp["run"] if "run" in cp else {}
    mapping = {
        "algo": str, "backend": str, "preset": str, "eps": float,
        "gamma": float, "episodes": int, "iters": int, "seed": int,
        "key_seed": int, "noise_mode": str, "order": str,
        "max_updates": int, "two_process": lambda v: v == "True",
        "circuit_privacy": lambda v: v == "True",
    }
    for key, conv in mapping.items():
        if key in run and f"--{key.replace('_', '-')}" not in sys.argv:
            raw = run[key]
            setattr(args, key, None if raw == "None" else conv(raw))
    if "grid" in cp and not args.grid:
        args._grid_section = dict(cp["grid"])
    return args


def _grid_config(args):
    if getattr(args, "_grid_section", None):
        cp = configparser.ConfigParser()
        cp["grid"] = args._grid_section
        import tempfile
        with tempfile.NamedTemporaryFile("w", suffix=".ini",
                                         delete=False) as fh:
            cp.write(fh)
            tmp = fh.name
        cfg = mdp.load_grid_config(tmp)
        os.unlink(tmp)
    elif args.grid:
        cfg = mdp.load_grid_config(args.grid)
    else:
        cfg = GridWorldConfig()
    if args.gamma is not None and args.gamma != cfg.gamma:
        from dataclasses import replace
        cfg = replace(cfg, gamma=args.gamma)
    return cfg


def _validate(args):
    """Fail fast, before any expensive work."""
    if args.eps < 0:
        raise ConfigError("--eps must be >= 0")
    if args.gamma is not None and not 0 <= args.gamma < 1:
        raise ConfigError("--gamma must lie in [0, 1)")
    if args.algo in LEARN_ALGOS and args.backend == "encrypted":
        preset = get_preset(args.preset)
        need = DECLARED_DEPTH[args.algo]
        if preset.depth_budget < need:
            raise ConfigError(
                f"preset {args.preset!r} provides depth {preset.depth_budget}"
                f" but the {args.algo} circuit needs {need} (choose a larger"
                f" chain)")


def cmd_run(args, parser):
    if args.config:
        _load_config_defaults(args, parser)
    _validate(args)
    grid_cfg = _grid_config(args)
    env = mdp.gridworld_build(grid_cfg)
    name = f"{args.algo}-{args.backend}-s{args.seed}"
    out = _out_dir(args, name)
    t0 = time.perf_counter()
    if args.algo in VI_ALGOS:
        results = _run_vi(args, env, out)
    else:
        results = _run_learning(args, env, grid_cfg, out)
    results["wall_seconds"] = f"{time.perf_counter() - t0:.3f}"
    _write_manifest(out / "manifest.ini", args, grid_cfg, extra=results)
    print(f"artifacts written to {out}")
    return 0


def _run_vi(args, env, out):
    iters = args.iters
    results = {}
    v_star = dp.vi_sync(env, tol=1e-10, max_iter=100_000).V
    if args.algo == "vi-sync":
        res = dp.vi_sync(env, tol=1e-8, max_iter=iters)
        traj = np.stack([res.V])
        report_text = (f"vi-sync: converged={res.converged} "
                       f"iterations={res.iterations} residual={res.residual:.3g}")
        results["converged"] = res.converged
    elif args.algo == "vi-sync-noisy":
        traj = dp.vi_sync_noisy(env, eps=args.eps, iters=iters,
                                seed=args.seed, mode=args.noise_mode)
        report = dp.check_thm1(env, args.eps, traj, v_star=v_star)
        report_text = report.to_text()
        results.update(observed=report.observed, bound=report.bound,
                       passed=report.passed)
    else:
        if args.order == "round-robin":
            order = list(range(env.n_states)) * max(1, iters // env.n_states)
            eps = args.eps if args.algo == "vi-async-noisy" else 0.0
            traj = dp.vi_async(env, order=order, eps=eps, seed=args.seed,
                               mode=args.noise_mode)
        else:
            eps = args.eps if args.algo == "vi-async-noisy" else 0.0
            traj, order = dp.vi_async_egreedy(env, eps=eps, steps=iters,
                                              seed=args.seed,
                                              mode=args.noise_mode)
        tracker = dp.sweep_track(order, env.n_states)
        report = dp.check_thm2(env, args.eps, traj, tracker, v_star=v_star)
        report_text = report.to_text()
        results.update(observed=report.observed, bound=report.bound,
                       passed=report.passed, M=tracker.M)
    dp.dump_trajectory_csv(out / "trajectory.csv", traj, v_star)
    tdlearn.write_value_csv(out / "values.csv", traj[-1])
    (out / "report.txt").write_text(report_text + "\n")
    print(report_text)
    return results


def _build_encrypted(args):
    params = preset_params(args.preset)
    preset = get_preset(args.preset)
    keys = ckks.keygen(params, preset.sigma, seed=args.key_seed)
    backend = make_backend("encrypted", params=params, keys=keys,
                           seed=args.seed,
                           work_level=DECLARED_DEPTH[args.algo])
    if args.two_process:
        cloud = protocol.LoopbackCloud(
            params, preset.sigma, keys,
            levels=list(range(DECLARED_DEPTH[args.algo] + 1)),
            circuit_privacy=args.circuit_privacy,
            pk=keys.pk if args.circuit_privacy else None,
            host=args.host, port=args.port)
    else:
        service = protocol.CloudService(
            params, backend.eval_keys, circuit_privacy=args.circuit_privacy,
            pk=keys.pk if args.circuit_privacy else None)
        cloud = protocol.InProcessCloud(service)
    return backend, cloud


def _run_learning(args, env, grid_cfg, out):
    theta = Hyperparams(gamma=env.gamma)
    episodes = args.episodes or DEFAULT_EPISODES[args.algo]
    cloud = None
    if args.backend == "encrypted":
        backend, cloud = _build_encrypted(args)
    else:
        backend = make_backend(args.backend, eps=args.eps, seed=args.seed,
                               adversarial=args.noise_mode == "adversarial")
    try:
        state, trace = tdlearn.run_learning(
            args.algo, env, theta, backend, episodes, args.seed,
            max_updates=args.max_updates or None, cloud=cloud,
            max_steps=grid_cfg.max_episode_steps)
    finally:
        if cloud is not None:
            cloud.close()
    tdlearn.write_value_csv(out / "values.csv", state.table)
    tdlearn.write_trace_csv(out / "error_trace.csv", trace)
    results = {"updates": state.updates, "episodes": state.episodes}
    if trace.max_errors:
        results["max_trace_error"] = max(trace.max_errors)
        results["final_trace_error"] = trace.max_errors[-1]
    print(f"{args.algo}/{args.backend}: {state.updates} updates over "
          f"{state.episodes} episodes")
    if state.shadow is not None:
        print(f"max-norm trace: max={results['max_trace_error']:.3g} "
              f"final={results['final_trace_error']:.3g}")
    return results


def cmd_list_presets(args, parser):
    print(f"{'name':<12}{'N':>7}{'Q bits':>8}{'sigma':>10}{'depth':>7}"
          f"  chain (bits)")
    for name, p in PRESETS.items():
        chain = ",".join(str(b) for b in (*p.base_bits, *p.rescale_bits))
        print(f"{name:<12}{p.n:>7}{p.total_bits:>8}{p.sigma:>10.4f}"
              f"{p.depth_budget:>7}  [{chain}]")
    return 0


def cmd_bench(args, parser):
    _validate(args)
    updates = max(args.updates, 100)
    rng = np.random.default_rng(args.seed)
    phases = {"encode": 0.0, "encrypt": 0.0, "evaluate": 0.0, "decrypt": 0.0}
    if args.backend == "exact":
        backend = make_backend("exact")
        t0 = time.perf_counter()
        for _ in range(updates):
            v, vp, a, g, r = rng.uniform(0, 1, 5)
            sv = {k: backend.encrypt(x) for k, x in
                  dict(v=v, vp=vp, a=a, g=g, r=r).items()}
            t1 = backend.mul(sv["a"], sv["r"])
            t2 = backend.mul(backend.mul(sv["a"], sv["g"]), sv["vp"])
            out = backend.sub(backend.add(backend.add(sv["v"], t1), t2),
                              backend.mul(sv["a"], sv["v"]))
            backend.decrypt(out)
        phases["update"] = (time.perf_counter() - t0) / updates
    else:
        params = preset_params(args.preset)
        preset = get_preset(args.preset)
        keys = ckks.keygen(params, preset.sigma, seed=args.key_seed)
        backend = make_backend("encrypted", params=params, keys=keys,
                               seed=args.seed, work_level=2)
        service = protocol.CloudService(params, backend.eval_keys)
        level = 2
        for _ in range(updates):
            vals = dict(zip(("v", "vp", "alpha", "gamma", "r"),
                            rng.uniform(0, 1, 5)))
            t0 = time.perf_counter()
            pts = {k: ckks.encode(np.array([x]), preset.log_scale, params,
                                  level=level) for k, x in vals.items()}
            t1 = time.perf_counter()
            roles = {k: ckks.encrypt(pt, keys, backend.rng, level=level)
                     for k, pt in pts.items()}
            t2 = time.perf_counter()
            req = protocol.ClientRequest(algo="td0", request_id=0,
                                         roles=roles)
            resp = service.evaluate(req)
            t3 = time.perf_counter()
            ckks.decode(ckks.decrypt(resp.results["out"], keys))
            t4 = time.perf_counter()
            phases["encode"] += t1 - t0
            phases["encrypt"] += t2 - t1
            phases["evaluate"] += t3 - t2
            phases["decrypt"] += t4 - t3
        phases = {k: v / updates for k, v in phases.items()}
    print(f"per-update wall time over {updates} updates "
          f"({args.backend} backend):")
    for k, v in phases.items():
        print(f"  {k:<10}{v * 1e3:9.3f} ms")
    client = phases.get("encode", 0) + phases.get("encrypt", 0) \
        + phases.get("decrypt", 0)
    cloud = phases.get("evaluate", 0)
    if args.backend == "encrypted":
        side = "exceeds" if client > cloud else "does not exceed"
        print(f"client-side time ({client * 1e3:.3f} ms) {side} "
              f"cloud evaluate time ({cloud * 1e3:.3f} ms)")
    return 0


def cmd_kernel_bench(args, parser):
    from herl import _kernels_py
    from herl.ring import find_ntt_primes
    sizes = [1024, 4096]
    print(f"active kernel backend: {kernels.implementation()}")
    print(f"{'op':<16}{'N':>6}{'compiled':>12}{'python':>12}{'speedup':>9}")
    for n in sizes:
        q = find_ntt_primes(n, [40])[0]
        plan = kernels.plan_for(n, q)
        rng = np.random.default_rng(0)
        a = rng.integers(0, q, n, dtype=np.uint64)
        b = rng.integers(0, q, n, dtype=np.uint64)
        reps = max(20, 200_000 // n)

        def time_it(fn):
            t0 = time.perf_counter()
            for _ in range(reps):
                fn()
            return (time.perf_counter() - t0) / reps

        rows = []
        try:
            from herl import _kernels as fast
            have_fast = True
        except ImportError:
            fast = None
            have_fast = False
        for label, cfn, pfn in (
            ("ntt_forward",
             (lambda: fast.ntt_forward(a.copy(), q, plan.psi_rev,
                                       plan.psi_shoup)) if have_fast else None,
             lambda: _kernels_py.ntt_forward(a.copy(), q, plan.psi_rev,
                                             None)),
            ("mul_mod",
             (lambda: fast.mul_mod(a, b, np.empty_like(a), q))
             if have_fast else None,
             lambda: _kernels_py.mul_mod(a, b, q)),
        ):
            tc = time_it(cfn) if cfn else float("nan")
            tp = time_it(pfn)
            rows.append((label, n, tc, tp))
        for label, n_, tc, tp in rows:
            speed = tp / tc if tc == tc and tc > 0 else float("nan")
            print(f"{label:<16}{n_:>6}{tc * 1e6:>10.1f}us{tp * 1e6:>10.1f}us"
                  f"{speed:>8.1f}x")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="herl",
        description="encrypted tabular RL: theorem checks, learning runs, "
                    "benchmarks")
    parser.add_argument("--version", action="version",
                        version=_version_string())
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--algo", required=False, default="td0",
                     choices=VI_ALGOS + LEARN_ALGOS)
    run.add_argument("--backend", default="exact",
                     choices=("exact", "noise", "encrypted"))
    run.add_argument("--preset", default="desk", choices=sorted(PRESETS))
    run.add_argument("--eps", type=float, default=0.01,
                     help="noise bound (noise backend / noisy VI)")
    run.add_argument("--gamma", type=float, default=None)
    run.add_argument("--episodes", type=int, default=0,
                     help="0 = per-algorithm default")
    run.add_argument("--iters", type=int, default=500,
                     help="VI iterations (sync) or updates (async)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--key-seed", dest="key_seed", type=int, default=1000)
    run.add_argument("--noise-mode", dest="noise_mode", default="uniform",
                     choices=("uniform", "adversarial"))
    run.add_argument("--order", default="round-robin",
                     choices=("round-robin", "egreedy"))
    run.add_argument("--max-updates", dest="max_updates", type=int, default=0)
    run.add_argument("--out", default=None)
    run.add_argument("--grid", default=None, help="grid config INI")
    run.add_argument("--config", default=None,
                     help="rerun from a manifest.ini")
    run.add_argument("--two-process", dest="two_process", action="store_true")
    run.add_argument("--host", default="127.0.0.1")
    run.add_argument("--port", type=int, default=0)
    run.add_argument("--circuit-privacy", dest="circuit_privacy",
                     action="store_true")
    run.set_defaults(func=cmd_run)

    lp = sub.add_parser("list-presets", help="show encryption presets")
    lp.set_defaults(func=cmd_list_presets)

    bench = sub.add_parser("bench", help="per-phase update timings")
    bench.add_argument("--backend", default="encrypted",
                       choices=("exact", "encrypted"))
    bench.add_argument("--preset", default="desk", choices=sorted(PRESETS))
    bench.add_argument("--updates", type=int, default=100)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--key-seed", dest="key_seed", type=int, default=1000)
    bench.add_argument("--algo", default="td0")
    bench.add_argument("--eps", type=float, default=0.0)
    bench.add_argument("--gamma", type=float, default=None)
    bench.set_defaults(func=cmd_bench)

    kb = sub.add_parser("kernel-bench",
                        help="compiled vs pure-python kernels")
    kb.set_defaults(func=cmd_kernel_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
