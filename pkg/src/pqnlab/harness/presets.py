"""Per-seed experiment runners and the acceptance checks of each preset."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..agents import dqn_train, ensemble_train, pqn_train
from ..envs import DeepSea, make_env
from ..envs.baird import baird_build
from ..envs.tabular import SamplingDistribution, random_mdp
from ..net import init_params, layernorm_critic_specs
from ..stability.expected import baird_linear_params, baird_runs
from ..stability.jacobian import td_jacobian
from ..stability.probes import batchnorm_myopia_probe, theorem2_sweep, theorem3_sweep
from .config import ExperimentConfig
from .metrics import MetricsLog, write_csv

BAIRD_DEFAULT_LR = {"linear": 0.05, "layernorm": 0.01}


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


def first_reach(records, key: str, threshold: float, x: str = "step"):
    """``(x, wall_clock_s)`` of the first record whose ``key`` is at least ``threshold``; Nones if never."""
    for r in records:
        v = r.get(key)
        if v is not None and v >= threshold:
            return r[x], r.get("wall_clock_s")
    return None, None


def _median_or_inf(values):
    vals = [math.inf if v is None else v for v in values]
    return float(np.median(vals)) if vals else math.inf


# ------------------------------------------------------------ seed runners
# Each returns {"runs": {label: (kind, records)}, "summary": {...}}; records keep wall_clock_s,
# which the writer strips into the timing file.

def _pqn_run(cfg: ExperimentConfig, seed: int, **over):
    pc = cfg.pqn_config(**over)
    env = make_env(cfg["env"], pc.num_envs)
    eval_env = make_env(cfg["env"], pc.eval_episodes)
    _, records = pqn_train(pc, env, seed, eval_env=eval_env)
    step, secs = first_reach(records, "eval_return", cfg["threshold"])
    return records, {"steps_to_threshold": step, "time_to_threshold": secs,
                     "final_eval_return": records[-1].get("eval_return"),
                     "total_time": records[-1]["wall_clock_s"]}


def run_control(cfg, seed):
    runs, summary = {}, {}
    records, summary["pqn"] = _pqn_run(cfg, seed)
    runs["pqn"] = ("train", records)
    if cfg["run_dqn"]:
        dc = cfg.dqn_config()
        env = make_env(cfg["env"], dc.num_envs)
        _, drec = dqn_train(dc, env, seed, eval_env=make_env(cfg["env"], dc.eval_episodes))
        step, secs = first_reach(drec, "eval_return", cfg["threshold"])
        summary["dqn"] = {"steps_to_threshold": step, "time_to_threshold": secs,
                          "final_eval_return": drec[-1].get("eval_return"), "total_time": drec[-1]["wall_clock_s"]}
        runs["dqn"] = ("train", drec)
    return {"runs": runs, "summary": summary}


def run_ablate_lambda(cfg, seed):
    runs, summary = {}, {}
    for lam in cfg["lambdas"]:
        label = f"lambda{lam!r}"
        records, summary[label] = _pqn_run(cfg, seed, lam=lam)
        runs[label] = ("train", records)
    return {"runs": runs, "summary": summary}


def run_ablate_norm(cfg, seed):
    runs, summary = {}, {}
    for norm in cfg["norm_types"]:
        records, summary[norm] = _pqn_run(cfg, seed, norm_type=norm)
        runs[norm] = ("train", records)
    return {"runs": runs, "summary": summary}


def run_deepsea(cfg, seed):
    ec = cfg.ensemble_config()
    runs, summary = {}, {}
    for depth in cfg["depths"]:
        env = DeepSea(depth, ec.num_envs, obs=cfg["observation"])
        _, records = ensemble_train(ec, env, seed, log_every=cfg["log_every"])
        label = f"depth{depth}"
        runs[label] = ("train", records)
        summary[label] = {"solved_episode": records[-1].get("solved_episode"), "episodes": records[-1]["episode"],
                          "total_time": records[-1]["wall_clock_s"]}
    return {"runs": runs, "summary": summary}


def run_baird(cfg, seed):
    lr = cfg["lr"] or BAIRD_DEFAULT_LR[cfg["variant"]]
    start = time.perf_counter()
    h = baird_runs(cfg["variant"], [seed], lr, cfg["sweeps"], cfg["width"], cfg["l2_eta"], cfg["gamma"],
                   cfg["record_every"])[0]
    records = [{"step": s, "param_norm": p, "td_error_norm": t}
               for s, p, t in zip(h["sweep"], h["param_norm"], h["td_error_norm"])]
    records[-1]["wall_clock_s"] = time.perf_counter() - start
    pn, td = np.array(h["param_norm"]), np.array(h["td_error_norm"])
    crossed = np.flatnonzero(pn >= cfg["growth_threshold"] * pn[0])
    summary = {"lr": lr, "growth": float(pn[-1] / pn[0]) if np.isfinite(pn[-1]) else math.inf,
               "divergence_sweep": int(h["sweep"][crossed[0]]) if crossed.size else None,
               "td_initial": float(td[0]), "td_final": float(td[-1]), "td_max": float(np.max(td)),
               "td_finite": bool(np.all(np.isfinite(td)))}
    return {"runs": {"baird": ("sweep", records)}, "summary": summary}


def run_jacobian(cfg, seed):
    mdp, sampling, _ = baird_build(cfg["gamma"])
    rng = np.random.default_rng([seed, 11])
    records = []
    for i in range(cfg["points"]):
        t0 = time.perf_counter()
        if cfg["variant"] == "linear":
            params, eta = baird_linear_params(), 0.0
            if i > 0:
                params.weights[0]["W"] = rng.standard_normal(params.weights[0]["W"].shape)
        else:
            params, eta = init_params(layernorm_critic_specs(8, cfg["width"], 2), seed=rng), cfg["l2_eta"]
        rep = td_jacobian(mdp, sampling, params, cfg["gamma"], eta, h=cfg["fd_step"])
        no_curv = np.linalg.eigvals(rep.off_policy - np.diag(rep.l2_diagonal)).real.max()
        records.append({"step": i, "max_real": rep.max_real, "active_max_real": rep.active_max_real,
                        "neutral_count": rep.neutral_count, "num_params": int(rep.jacobian.shape[0]),
                        "max_real_without_curvature": float(no_curv),
                        "curvature_norm": float(np.abs(np.linalg.eigvalsh(rep.curvature)).max()),
                        "wall_clock_s": time.perf_counter() - t0})
    return {"runs": {"jacobian": ("point", records)},
            "summary": {"max_real": [r["max_real"] for r in records]}}


def _probe_records(res, keys):
    records = []
    for j, v in enumerate(res.values):
        rec = {"step": v, "statistic": res.statistic[j], "count": res.counts[j]}
        for k in keys:
            rec[k] = res.extra[k][j]
        records.append(rec)
    return records


def stationary_distribution(P_pi: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eig(P_pi.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    v = np.abs(v)
    return v / v.sum()


def thm1_problem(cfg, seed):
    """Random MDP, uniform behaviour policy with its stationary state weights, random target, f and w."""
    rng = np.random.default_rng([seed, 21])
    mdp = random_mdp(cfg["states"], cfg["actions"], cfg["gamma"], seed=int(rng.integers(2**31)))
    S, A = cfg["states"], cfg["actions"]
    mu = np.full((S, A), 1.0 / A)
    pi = rng.dirichlet(np.ones(A), size=S)
    d_s = stationary_distribution(np.einsum("sa,sat->st", mu, mdp.P))
    sampling = SamplingDistribution.from_state_dist(d_s, mu, pi)
    features = rng.standard_normal((S, A, cfg["feature_dim"]))
    w = rng.standard_normal(cfg["feature_dim"])
    return mdp, sampling, features, w


def run_thm1(cfg, seed):
    mdp, sampling, features, w = thm1_problem(cfg, seed)
    res = batchnorm_myopia_probe(mdp, sampling, features, w, cfg["batch_sizes"], cfg["trials"], cfg["gamma"],
                                 seed=seed)
    records = _probe_records(res, ["bellman_estimate", "standard_error", "bootstrap_mean"])
    for r in records:
        r["expected_reward"] = res.reference
    return {"runs": {"probe": ("probe", records)}, "summary": res.summary(), "probe": res}


def run_thm2(cfg, seed):
    res = theorem2_sweep(cfg["widths"], cfg["trials"], cfg["gamma"], seed, cfg["input_dim"])
    records = _probe_records(res, ["excess", "median_excess", "raw_minus_reference"])
    summary = res.summary()
    summary["excess_exponent"] = res.exponent("excess")
    summary["excess_decreasing"] = bool(np.all(np.diff(res.extra["excess"]) < 0))
    return {"runs": {"probe": ("probe", records)}, "summary": summary, "probe": res}


def run_thm3(cfg, seed):
    res = theorem3_sweep(cfg["widths"], cfg["trials"], cfg["gamma"], seed, cfg["input_dim"])
    control = theorem3_sweep(cfg["widths"][:1], min(cfg["trials"], 50), cfg["gamma"], seed, cfg["input_dim"],
                             linear=True)
    records = _probe_records(res, ["median"])
    summary = res.summary()
    summary["linear_control_max"] = float(control.statistic[0])
    return {"runs": {"probe": ("probe", records)}, "summary": summary, "probe": res}


RUNNERS = {
    "cartpole": run_control, "acrobot": run_control, "ablate-lambda": run_ablate_lambda,
    "ablate-norm": run_ablate_norm, "deepsea": run_deepsea, "baird": run_baird, "jacobian": run_jacobian,
    "probe-thm1": run_thm1, "probe-thm2": run_thm2, "probe-thm3": run_thm3,
}


def run_seed(cfg: ExperimentConfig, seed: int, out: Path) -> dict:
    """Run one seed, write its metric logs (and probe CSV) and return its summary and timings."""
    result = RUNNERS[cfg.preset](cfg, seed)
    timing = {}
    files = {}
    for label, (kind, records) in result["runs"].items():
        name = f"seed{seed}.jsonl" if len(result["runs"]) == 1 else f"{label}_seed{seed}.jsonl"
        with MetricsLog(out / name, kind) as log:
            for r in records:
                log.append(r)
        timing[label] = log.timing
        files[label] = name
    if "probe" in result:
        write_csv(out / f"probe_seed{seed}.csv",
                  [dict(zip(("variable", "value", "trial", "statistic"), row)) for row in result["probe"].rows()],
                  ["variable", "value", "trial", "statistic"])
    return {"seed": seed, "summary": result["summary"], "timing": timing, "files": files}


# ------------------------------------------------------------------ checks

def _fraction(flags):
    flags = list(flags)
    return sum(flags) / len(flags) if flags else 0.0


def check_results(cfg: ExperimentConfig, results: list[dict]) -> list[Check]:
    p = cfg.preset
    S = [r["summary"] for r in results]
    n = len(S)
    checks: list[Check] = []
    if p in ("cartpole", "acrobot"):
        steps = [s["pqn"]["steps_to_threshold"] for s in S]
        frac = _fraction(x is not None for x in steps)
        checks.append(Check("pqn_reaches_threshold", frac >= cfg["min_solved_fraction"],
                            f"{sum(x is not None for x in steps)}/{n} seeds reach {cfg['threshold']} "
                            f"(need {cfg['min_solved_fraction']:.0%}); steps {steps}"))
        if cfg["run_dqn"]:
            dsteps = [s["dqn"]["steps_to_threshold"] for s in S]
            dfrac = _fraction(x is not None for x in dsteps)
            checks.append(Check("dqn_reaches_threshold", dfrac >= 0.5,
                                f"{sum(x is not None for x in dsteps)}/{n} seeds reach {cfg['threshold']} "
                                f"(need a majority); steps {dsteps}"))
            tp = _median_or_inf(s["pqn"]["time_to_threshold"] for s in S)
            td = _median_or_inf(s["dqn"]["time_to_threshold"] for s in S)
            ratio = td / tp if math.isfinite(tp) and tp > 0 else math.nan
            checks.append(Check("dqn_wall_clock_ratio", bool(ratio >= cfg["min_time_ratio"]),
                                f"median time to threshold: dqn {td:.1f}s, pqn {tp:.1f}s, ratio {ratio:.2f} "
                                f"(need >= {cfg['min_time_ratio']})"))
    elif p == "ablate-lambda":
        labels = [f"lambda{lam!r}" for lam in cfg["lambdas"]]
        med = {lab: _median_or_inf(s[lab]["steps_to_threshold"] for s in S) for lab in labels}
        first = labels[0]
        ok = all(med[first] < med[lab] for lab in labels[1:])
        checks.append(Check("first_lambda_fastest", ok, "median steps to threshold: " +
                            ", ".join(f"{lab}={med[lab]}" for lab in labels)))
    elif p == "ablate-norm":
        first = cfg["norm_types"][0]
        counts = {nt: sum(s[nt]["steps_to_threshold"] is not None for s in S) for nt in cfg["norm_types"]}
        checks.append(Check(f"{first}_reaches_threshold", counts[first] / n >= cfg["min_solved_fraction"],
                            "seeds reaching the threshold: " + ", ".join(f"{k}={v}/{n}" for k, v in counts.items())))
    elif p == "deepsea":
        for depth in cfg["depths"]:
            lab = f"depth{depth}"
            solved = [s[lab]["solved_episode"] is not None for s in S]
            meet = solved if cfg["expect"] == "solve" else [not x for x in solved]
            checks.append(Check(f"{lab}_{cfg['expect']}", _fraction(meet) >= cfg["required_fraction"],
                                f"{sum(solved)}/{n} seeds solved; solved episodes "
                                f"{[s[lab]['solved_episode'] for s in S]} (expect {cfg['expect']}, "
                                f"need {cfg['required_fraction']:.0%})"))
    elif p == "baird":
        if cfg["variant"] == "linear":
            ok = all(s["divergence_sweep"] is not None for s in S)
            checks.append(Check("divergence_detected", ok,
                                f"norm growth {[round(s['growth'], 3) for s in S]}, crossing "
                                f"{cfg['growth_threshold']}x at sweeps {[s['divergence_sweep'] for s in S]}"))
        else:
            bounded = [s["td_finite"] and s["td_max"] <= cfg["bound_factor"] * s["td_initial"] for s in S]
            lower = [s["td_final"] < s["td_initial"] for s in S]
            checks.append(Check("td_error_bounded", all(bounded),
                                f"max/initial TD-error norm {[round(s['td_max'] / s['td_initial'], 3) for s in S]}"))
            checks.append(Check("td_error_decreases", all(lower),
                                f"final/initial {[float('%.3g' % (s['td_final'] / s['td_initial'])) for s in S]}"))
    elif p == "jacobian":
        vals = [v for s in S for v in s["max_real"]]
        if cfg["variant"] == "linear":
            checks.append(Check("positive_eigenvalue", all(v > 0 for v in vals),
                                f"max real eigenvalues {[float('%.3g' % v) for v in vals]}"))
        else:
            checks.append(Check("all_eigenvalues_negative", all(v < 0 for v in vals),
                                f"{sum(v < 0 for v in vals)}/{len(vals)} points negative; largest "
                                f"{max(vals):.3g}"))
    elif p == "probe-thm1":
        for s in S:
            st, est, se = s["statistic"], s["bellman_estimate"], s["standard_error"]
            checks.append(Check("bootstrap_shrinks", st[-1] < st[0],
                                f"median |bootstrap| {st[0]:.4g} at N={s['values'][0]} vs {st[-1]:.4g} "
                                f"at N={s['values'][-1]}"))
            checks.append(Check("bellman_matches_reward", abs(est[-1] - s["reference"]) <= 2 * se[-1],
                                f"estimate {est[-1]:.5f} vs E[r] {s['reference']:.5f}, 2SE {2 * se[-1]:.5f}"))
    elif p == "probe-thm2":
        lo, hi = cfg["exponent_low"], cfg["exponent_high"]
        for s in S:
            checks.append(Check("excess_decreasing", s["excess_decreasing"],
                                f"excess {[float('%.4g' % e) for e in s['excess']]}"))
            e = s["excess_exponent"]
            checks.append(Check("excess_exponent_in_range", bool(lo <= e <= hi), f"exponent {e:.3f} in [{lo}, {hi}]"))
    elif p == "probe-thm3":
        lo, hi = cfg["exponent_low"], cfg["exponent_high"]
        for s in S:
            checks.append(Check("statistic_decreasing", s["decreasing"],
                                f"max {[float('%.4g' % e) for e in s['statistic']]}"))
            e = s["exponent"]
            checks.append(Check("exponent_in_range", bool(lo <= e <= hi), f"exponent {e:.3f} in [{lo}, {hi}]"))
            checks.append(Check("linear_control_zero", s["linear_control_max"] < cfg["linear_tolerance"],
                                f"linear-model statistic {s['linear_control_max']:.3g}"))
    return checks
