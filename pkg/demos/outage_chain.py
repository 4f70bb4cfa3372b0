"""Look at the default reliability chain: long-run behaviour and outage forecasts."""
import numpy as np

from vnfmig.outage import default_chain, outage_probability, stationary_distribution

chain = default_chain(seed=0)
pi = stationary_distribution(chain.transition_matrix)
for name, p in zip(chain.states, pi):
    print(f"{name:>10s}: {p:.3f} of the time")

T = 30
print(f"\nmean outage probability over the next {T} steps, by current state")
for s, name in enumerate(chain.states):
    p_o = [outage_probability(chain, s, k) for k in range(1, T + 1)]
    print(f"{name:>10s}: {np.mean(p_o):.3f}  (k=1: {p_o[0]:.3f}, k={T}: {p_o[-1]:.3f})")

n = 100_000
visits = np.bincount([chain.step() for _ in range(n)], minlength=len(chain.states)) / n
print("\nsimulated occupancy:", np.round(visits, 3))
