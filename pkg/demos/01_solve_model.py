"""Solve the linearized model at the tabulated posterior mode and look at the solution."""
import numpy as np

from swlab import params as P
from swlab.gensys import EU
from swlab.model import STATE_LABELS, build_system, solve, state_index

theta = P.posterior_mode()
print(f"{P.N_ESTIMATED} estimated parameters, fixed: {P.FIXED}")

# expand to the full parameter set: fixed values, steady state, reduced-form coefficients
fp = P.expand_params(theta)
print("steady-state rental rate", round(fp.values["rk_star"], 5), " c/y", round(fp.values["c_y"], 4))

model, Z, mu = build_system(fp)
print("LRE system:", model.G0.shape[0], "equations,", model.B.shape[1], "shocks,", model.C.shape[1], "expectation errors")

ss, solved, _ = solve(theta)
print("existence/uniqueness:", [e.value for e in solved.eu], " unstable roots:", solved.n_unstable)
assert solved.eu == (EU.YES, EU.YES)

# the transition is stable: every eigenvalue inside the unit circle
print("spectral radius of T:", round(max(abs(np.linalg.eigvals(ss.T))), 5))

# impulse response of output to a one-sd monetary policy shock
shock = P.SHOCK_SD_NAMES.index("sigma_r")
z = ss.H[:, shock] * np.sqrt(ss.Q[shock, shock])
y = state_index("y")
irf = []
for _ in range(12):
    irf.append(z[y])
    z = ss.T @ z
print("output response to a policy shock:", np.round(irf, 3))
print("first states:", STATE_LABELS[:8])

# pushing the inflation response below one breaks determinacy
bad = theta.copy()
bad[P.INDEX["r_pi"]], bad[P.INDEX["r_y"]], bad[P.INDEX["r_dy"]] = 1.0, 0.0, 0.0
ss_bad, solved_bad, _ = solve(bad)
print("weak policy rule:", ss_bad, [e.value for e in solved_bad.eu])
