# %% [markdown]
# # Changes of variables
#
# A local diffeomorphism `x = q(y)` with `q(0) = 0` changes the problem but
# not its multipliers. Gradients pick up `Dq'`, Hessians an extra curvature
# term that vanishes exactly when first-order conditions hold.

# %%
import numpy as np

from nlpcanon import NLPInstance
from nlpcanon.change_of_vars import (
    random_diffeomorphism,
    verify_chain_rules,
    verify_multiplier_invariance,
    verify_second_order_invariance,
)

P = NLPInstance.from_text(
    """vars z w1 w2
radius 1
objective w1^2 + w2^2 - 2*z
ineq g1: z
ineq g2: z + w1*w2
"""
)
q = random_diffeomorphism(3, seed=0, magnitude=0.1)
print("Dq(0) =\n", q.D0)

# %%
pts = np.random.default_rng(0).uniform(-0.1, 0.1, (4, 3))
print(verify_chain_rules(P, q, pts).as_dict())

# %% [markdown]
# `mu = (2, 0)` solves first order on both sides; `mu = 0` fails on both.

# %%
for mu in ([2.0, 0.0], [0.0, 0.0]):
    print(mu, verify_multiplier_invariance(P, q, None, mu).as_dict())

# %%
print(verify_second_order_invariance(P, q, None, [2.0, 0.0]).as_dict())
