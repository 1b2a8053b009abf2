# %% [markdown]
# # Cancellations on the truncated lattice
#
# The energy estimate rests on two cancellations: the convection form
# `b(u, v, v)` and the Hall form `hall(u, v, v)` both vanish for
# divergence-free `u`. Here they are checked on random band-limited fields.
# We also look at the sign of the link between the two forms.

# %%
import numpy as np

from hallmhd.operators import form_b, form_hall
from hallmhd.spectral import derivative, make_lattice, random_field

lat = make_lattice(16, 2 * np.pi, 5.0)
rng = np.random.default_rng(0)
u, v = random_field(lat, rng), random_field(lat, rng)
print(f"{lat.mode_count} retained modes")
print("b(u,v,v)    =", form_b(u, v, v))
print("hall(u,v,v) =", form_hall(u, v, v))

# %% [markdown]
# `u x curl u` equals `grad|u|^2/2 - (u.grad)u`. The gradient part is
# orthogonal to `curl v`. So `hall(u,u,v)` equals `+b(u,u,curl v)`, and the
# version with a minus sign is off by twice the value.

# %%
cv = derivative(v, "curl")
h, b = form_hall(u, u, v), form_b(u, u, cv)
print(f"hall(u,u,v) = {h:.6e}")
print(f"hall - b    = {h - b:.2e}")
print(f"hall + b    = {h + b:.6e}  (about 2 * hall)")
