"""Quick invariant checks and a smoke run of every shipped figure config."""

import time
from dataclasses import replace
from importlib import resources

import numpy as np

from .bd import build_precoder_set
from .channel import ChannelSet, SystemConfig, draw_channel_batch, substream
from .experiments import load_spec, run_experiment
from .lattice import QAM4, gamma_of, gamma_via_svd, perturb, perturb_exhaustive, qam_modulate
from .link import SchemeId, StoppingRule, run_ber
from .numeric import pseudo_inverse, svd
from .rates import equal_power_capacity, rate_prop
from .waterfill import waterfill


def config_paths():
    root = resources.files("lbmimo") / "configs"
    return sorted((p for p in root.iterdir() if p.name.endswith(".ini")), key=lambda p: p.name)


def _random_precoders(cfg, rng):
    while True:
        try:
            return build_precoder_set(ChannelSet(draw_channel_batch(rng, cfg, 1)[0]), cfg)
        except ArithmeticError:
            continue


def check_svd(rng):
    worst = 0.0
    for _ in range(50):
        m, n = rng.integers(1, 9, size=2)
        a = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        f = svd(a)
        worst = max(
            worst,
            np.abs(f.u.conj().T @ f.u - np.eye(m)).max(),
            np.abs(f.v.conj().T @ f.v - np.eye(n)).max(),
            np.linalg.norm(f.reconstruct() - a) / np.linalg.norm(a),
        )
        p = pseudo_inverse(a)
        worst = max(worst, np.linalg.norm(a @ p @ a - a) / np.linalg.norm(a))
    return worst <= 1e-10, f"max residual {worst:.2e}"


def check_zero_interference(rng):
    worst = 0.0
    for n_rx, k in ((2, 2), (2, 3), (3, 2)):
        cfg = SystemConfig.scenario(n_rx, k)
        for _ in range(100):
            h = draw_channel_batch(rng, cfg, 1)[0]
            pre = build_precoder_set(ChannelSet(h), cfg)
            for a in range(k):
                for b in range(k):
                    if a != b:
                        worst = max(worst, np.linalg.norm(h[b] @ pre[a].nulling) / np.linalg.norm(h[b]))
    return worst <= 1e-9, f"max leakage {worst:.2e}"


def check_perturbation(rng):
    cfg = SystemConfig.scenario(2, 2)
    for _ in range(50):
        user = _random_precoders(cfg, rng)[0]
        s = qam_modulate(rng.integers(0, 2, 4))
        a = perturb(s, user.h_eff_inv, QAM4, 2)
        b = perturb_exhaustive(s, user.h_eff_inv, QAM4, 2)
        if not np.array_equal(a.coefficients, b.coefficients) or a.gamma != b.gamma:
            return False, f"mismatch for s={s}"
    return True, "50 instances match brute force"


def check_waterfill(rng):
    for _ in range(100):
        g = rng.exponential(size=rng.integers(1, 9))
        p = rng.uniform(0.1, 20.0)
        wf = waterfill(g, p, 1.0)
        if abs(wf.powers.sum() - p) > 1e-9 * p:
            return False, "power not conserved"
        ep = np.sum(np.log2(1 + g * p / g.size))
        if wf.achieved_rate < ep - 1e-12:
            return False, "water-filling below equal power"
    return True, "KKT and dominance hold on 100 sets"


def check_rate_identities(rng):
    cfg = SystemConfig.scenario(2, 2)
    worst = 0.0
    for _ in range(100):
        user = _random_precoders(cfg, rng)[0]
        rho = 10 ** rng.uniform(-1, 4)
        ld = equal_power_capacity(user.h_eff, rho)
        worst = max(worst, abs(rate_prop(user, rho) - ld) / max(ld, 1e-300))
        s = qam_modulate(rng.integers(0, 2, 4)) + 2.0 * rng.integers(-2, 3, 2)
        g1, g2 = gamma_of(s, user.h_eff_inv), gamma_via_svd(s, user.h_eff)
        worst = max(worst, abs(g1 - g2) / g1)
    return worst <= 1e-9, f"max relative gap {worst:.2e}"


def check_noiseless():
    stop = StoppingRule(0, 200, 200)
    for n_rx, k in ((2, 2), (2, 3), (3, 2)):
        cfg = replace(SystemConfig.scenario(n_rx, k), noise_var=1e-20)
        for scheme in SchemeId:
            curve = run_ber(cfg, scheme, [200.0], stop, master_seed=1, workers=1)
            if curve.points[0].bit_errors:
                return False, f"{scheme.value} {{{n_rx},{k}}} has bit errors without noise"
    return True, "zero bit errors for every scheme"


def smoke_configs(budget_s=10.0):
    results = []
    for path in config_paths():
        t0 = time.perf_counter()
        spec = load_spec(text=path.read_text(encoding="utf-8"))
        small = replace(
            spec,
            snr_db=spec.snr_db[:2],
            draws=min(spec.draws, 20),
            streams=spec.streams[:2],
            users=spec.users[:2],
            min_trials=100,
            max_trials=200,
            block_size=100,
        )
        record = run_experiment(small, workers=1)
        dt = time.perf_counter() - t0
        ok = bool(record.rows) and dt <= budget_s
        results.append((f"config {path.name}", ok, f"{len(record.rows)} rows in {dt:.1f}s"))
    return results


def run_selftest(seed=0):
    """Return ``[(name, passed, detail), ...]``."""
    rng = substream(seed, 0)
    checks = [
        ("svd and pseudo-inverse", lambda: check_svd(rng)),
        ("zero interference", lambda: check_zero_interference(rng)),
        ("perturbation oracle", lambda: check_perturbation(rng)),
        ("water-filling", lambda: check_waterfill(rng)),
        ("rate identities", lambda: check_rate_identities(rng)),
        ("noiseless end to end", check_noiseless),
    ]
    results = [(name, *fn()) for name, fn in checks]
    return results + smoke_configs()
