"""Where the KL to the reference measure stops growing.

On the single-state hat bandit, pushing the parameter along the plateau
direction piles the policy onto the middle third of [0, 1].  The KL to the
uniform reference climbs towards log 3 instead of diverging.  A generic
direction keeps climbing until it hits the grid ceiling log(J).

Run:  python3 demos/hat_plateau.py
"""

import math

import numpy as np

from entroflow.diagnostics import radial_probe
from entroflow.mdp import build_hat_bandit
from entroflow.policy import kl_to_reference, make_policy

model = build_hat_bandit(nodes=4096)
plateau = np.array([-1.0, 1.0, 1.0, -1.0])

print("beta     quadrature KL   log3 - 2/beta + 3/(2 beta^2)")
for beta in (5, 10, 40, 100, 200, 1000):
    kl = kl_to_reference(make_policy(model, beta * plateau), 0)
    approx = math.log(3) - 2 / beta + 3 / (2 * beta**2)
    print(f"{beta:6d}   {kl:.8f}      {approx:.8f}")
print(f"log 3 = {math.log(3):.8f}; the expansion shows the approach is only O(1/beta)")

radii = np.geomspace(10, 2e5, 12)
table = radial_probe(model, 0, [plateau, [1.0, 0.0, 0.0, -1.0]], radii)
print("\nradius     plateau ray   tilted ray")
for k, r in enumerate(radii):
    print(f"{r:9.0f}   {table.kl[0, k]:.6f}      {table.kl[1, k]:.6f}")
print(f"grid ceiling -log(max weight) = {table.ceiling:.4f}")
print(f"plateau flags: {table.plateau}")
