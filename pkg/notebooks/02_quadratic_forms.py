# %% [markdown]
# # Two quadratic forms
#
# The joint range of `x'Ax` and `x'Bx` is either the whole plane or a
# sector narrower than a half-plane. Separation looks for one `gamma` in an
# interval with `A + gamma B` positive semidefinite; since
# `gamma -> lambda_min(A + gamma B)` is concave, a golden-section search
# finds it.

# %%
import numpy as np

from nlpcanon.errors import HypothesisViolated
from nlpcanon.quadratic_forms import joint_range, maximize_min_eigenvalue, semidefinite_separation

A = np.diag([1.0, 0.0])
B = np.diag([0.0, 1.0])
r = joint_range(A, B)
print(r.kind, "from", r.theta1, "to", r.theta2)

# %%
print(joint_range(np.diag([1.0, -1.0]), np.array([[0.0, 1.0], [1.0, 0.0]])).kind)

# %% [markdown]
# `A + gamma B = diag(1 - gamma, gamma - 1)` is PSD only at `gamma = 1`.

# %%
sep = semidefinite_separation(np.diag([1.0, -1.0]), np.diag([-1.0, 1.0]), (0, 2))
print("gamma*", sep.gamma_star, "lambda_min", sep.certificate_lambda_min)
print("regularized gammas", sep.regularized_gammas, "consistent", sep.regularized_consistent)

# %%
grid = np.linspace(0, 2, 9)
A, B = np.diag([1.0, 0.0]), np.diag([-1.0, 1.0])
print([round(float(np.linalg.eigvalsh(A + g * B)[0]), 3) for g in grid])
print("maximizer", maximize_min_eigenvalue(A, B, (0, 2)))

# %% [markdown]
# When no `gamma` works the error carries a witness direction.

# %%
try:
    semidefinite_separation(-np.eye(2), np.diag([1.0, -1.0]), (0, 2))
except HypothesisViolated as exc:
    print(exc, "witness", exc.witness)
