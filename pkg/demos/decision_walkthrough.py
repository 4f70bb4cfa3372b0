"""Walk through one migration decision by hand and against brute force."""
import numpy as np

from vnfmig.controller import brute_force_decide, decide, decide_as_printed
from vnfmig.econ import EconomicParams, exposures_from

params = EconomicParams(loss_rate_l=1.0, cost_nf=1.0, cost_sp=0.5, interval_T=30)

# two users near the edge cloud: one likely to be around during an outage, one not
exposures = exposures_from(["alice", "bob"], [3.0, 0.4])
out = decide(exposures=exposures, params=params)
print(f"migrate bound S1 = {out.bound_migrate_S1:.2f}, stay bound S2 = {out.bound_stay_S2:.2f}")
print("decision:", out.decision.migrate_m, sorted(out.decision.sync_set))

brute = brute_force_decide(["alice", "bob"], exposures, params)
print("brute force agrees:", brute.decision == out.decision)

# the reversed comparison picks the worse branch
wrong = decide_as_printed(exposures, params)
print(f"reversed comparison would pay {wrong.achieved:.2f} instead of {out.achieved:.2f}")

# same thing from raw horizons: flat outage risk, decaying visit probability
T = params.interval_T
p_o = np.full(T, 0.2)
p_v = [np.linspace(1.0, 0.2, T), np.linspace(0.1, 0.0, T)]
raw = decide(["alice", "bob"], p_o, p_v, params)
print("from horizons:", [round(e.exposure_Tu, 3) for e in raw.exposures], raw.decision)
