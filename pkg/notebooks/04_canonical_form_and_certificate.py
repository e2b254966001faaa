# %% [markdown]
# # Canonical form and the second-order certificate
#
# The chart `Phi(x) = (h(x), g_selected(x), W'x)` is inverted by Newton.
# In chart coordinates the equalities read `y`, the selected inequalities
# read `z`, and the remaining constraints `c` have `D_w c(0) = 0`.

# %%
import numpy as np

from nlpcanon import NLPInstance
from nlpcanon.canonical_form import build_canonical_chart, canonical_residuals, restrict_to_w
from nlpcanon.errors import SeparationFailed
from nlpcanon.nlp_analysis import andreani_certificate, verify_weak_second_order

P = NLPInstance.from_text(
    """vars x1 x2 x3
radius 1
objective x3^2 - x2
eq h1: x1 + x2 + x3^2
ineq g1: x2
ineq g2: x2 + x3^2
"""
)
chart = build_canonical_chart(P)
u = np.array([0.1, -0.05, 0.2])
y, z, w = u
print("Newton chart", chart.q(u), "closed form", [y - z - w * w, z, w])
print(canonical_residuals(chart).as_dict())
print("c~ Hessian", restrict_to_w(chart).c_hessians)

# %% [markdown]
# On the degenerate instance both inequalities share the gradient
# `(1, 0, 0)`. Every `mu` with `mu1 + mu2 = 2` solves first order, so
# `gamma = mu2` ranges over `[0, 2]`, and the certificate picks the value
# that makes `f~''(0) + gamma H` positive semidefinite.

# %%
text = """vars z w1 w2
radius 1
objective w1^2 + w2^2 - 2*z
ineq g1: z
ineq g2: z + w1*w2
"""
W = NLPInstance.from_text(text)
cert = andreani_certificate(W)
print("mu*", cert.mu, "gamma*", cert.gamma_star, "interval", cert.interval)
print("alpha", cert.alphas, "H\n", cert.H)
print(verify_weak_second_order(W, cert).as_dict())

# %% [markdown]
# With an indefinite objective on the `w` block no multiplier works, and
# the failure names the direction responsible.

# %%
try:
    andreani_certificate(NLPInstance.from_text(text.replace("w1^2 + w2^2", "w1^2 - w2^2")))
except SeparationFailed as exc:
    print(exc)
    print("witness", exc.witness, "minimality", exc.details["minimality"]["holds"])
