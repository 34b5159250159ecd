"""Cross-check the closed-form value by simulation.

Run: python3 demos/monte_carlo_check.py [n_paths]

Stops simulated paths at the computed boundary and at scaled copies of it.
The unscaled boundary should do best, and no rule should beat the closed form.
"""

import sys

from watermark import McConfig, ModelParams, build_surface, divergence_probe, perturbation_test, value_v


def main() -> None:
    n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
    params = ModelParams(mu=0.05, sigma=0.2, r=0.1, K=1.0, b=0.5)
    surf = build_surface(params)
    closed = value_v(1.0, 1.0, surf)
    print(f"closed form v(1, 1) = {closed:.6f}")

    cfg = McConfig(n_paths=n_paths, dt=2e-3, t_max=100.0, seed=1)
    ests = perturbation_test(params, surf.boundary, (0.7, 0.85, 1.0, 1.15, 1.3), 1.0, 1.0, cfg)
    for theta, est in ests.items():
        print(f"  theta = {theta:4.2f}: {est.mean:.6f} +/- {est.std_err:.6f}  ({est.n_truncated} paths still running)")

    # infinite value: fixed-horizon payoffs grow exponentially
    table = divergence_probe(ModelParams(mu=0.2, sigma=0.1, r=0.1, b=4.0), n_paths=20_000)
    print("divergence probe:", ", ".join(f"t={t:g}: {v:.3g}" for t, v in zip(table.horizons, table.estimates)))
    print(f"  fitted rate {table.fitted_rate:.4f}, predicted {table.predicted_rate:.4f}")


if __name__ == "__main__":
    main()
