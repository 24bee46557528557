"""Penalized maximum likelihood on the fixture panel with a small budget."""
from swlab.data import fixture_dir, ingest
from swlab.estimation import FitConfig, estimate, penalized_nll
from swlab.params import posterior_mode, sw_posterior_mode, theta_to_dict

panel = ingest(fixture_dir())
train = panel.values[:200]
print("penalized NLL at the tabulated mode:", round(penalized_nll(posterior_mode(), train), 2))
print("penalized NLL at the SW mode:", round(penalized_nll(sw_posterior_mode(), train), 2))

# annealing followed by projected conjugate gradients; the full desk profile uses 5000 evaluations per start
cfg = FitConfig.profile("desk", n_starts=1, budget=400, t0_draws=10)
fit = estimate(panel, cfg, supplied_starts=[sw_posterior_mode()])
print("estimated penalized NLL:", round(fit.penalized_nll, 2), "after", fit.n_evals, "evaluations")
for s in fit.starts:
    print("  start", "supplied" if s.supplied else "prior draw", "->", round(s.final, 2))
hat = theta_to_dict(fit.theta_hat)
print({k: round(hat[k], 3) for k in ("sigma_c", "h", "xi_p", "r_pi", "rho")})
