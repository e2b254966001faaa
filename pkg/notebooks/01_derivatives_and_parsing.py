# %% [markdown]
# # Expressions and exact derivatives
#
# Problem functions are written in a small expression language and
# differentiated by forward-mode jets that carry a value, a gradient and a
# Hessian. Finite differences serve only as an independent check.

# %%
import numpy as np

from nlpcanon import autodiff
from nlpcanon.expr import parse_expr, pretty

f = parse_expr("(1 - x1)^2 + 100*(x2 - x1^2)^2", 2)
print("f =", pretty(f))

# %%
x = np.array([-1.2, 1.0])
d = autodiff.derivatives(f, x)
print("gradient", d.gradient)
print("hessian\n", d.hessian)

# %% [markdown]
# The same numbers from central differences with one Richardson step.

# %%
print("fd gradient", autodiff.fd_gradient(f, x, 1e-5, richardson=True))
print("fd hessian\n", autodiff.fd_hessian(f, x, 1e-3, richardson=True))

# %% [markdown]
# A problem file names the variables, the ball on which the analysis is
# local, the objective and the active constraints.

# %%
from nlpcanon import NLPInstance

P = NLPInstance.from_text(
    """vars z w1 w2
radius 1
objective w1^2 + w2^2 - 2*z
ineq g1: z
ineq g2: z + w1*w2
"""
)
print("constraint Jacobian at 0\n", autodiff.jacobian(P.inequalities, np.zeros(3)))
