"""Tour of the tensor engine: taped forward passes, reverse-mode gradients,
a finite-difference cross-check, and a few Adam steps on a toy objective."""

import numpy as np

import semcap.autodiff as ad

rng = np.random.default_rng(0)

# A small expression: loss = mean(tanh(W x + b) * v)
W = ad.param(rng.normal(size=(4, 3)))
x = ad.param(rng.normal(size=3))
b = ad.param(rng.normal(size=4))
v = ad.param(rng.normal(size=4))


def forward():
    return ad.tmean(ad.mul(ad.tanh(ad.add(ad.matmul(W, x), b)), v))


with ad.Tape() as tape:
    loss = forward()
tape.backward(loss)
print(f"loss = {loss.item():.6f}")
print(f"dL/dx (reverse mode) = {x.grad}")

# Cross-check one gradient with central differences.
h = 1e-5
fd = np.zeros_like(x.data)
for i in range(3):
    orig = x.data[i]
    x.data[i] = orig + h
    f_plus = forward().item()
    x.data[i] = orig - h
    f_minus = forward().item()
    x.data[i] = orig
    fd[i] = (f_plus - f_minus) / (2 * h)
print(f"dL/dx (finite diff)  = {fd}")
print(f"max abs difference    = {np.abs(fd - x.grad).max():.2e}")

# Adam walks a quadratic bowl to its minimum.
p = ad.param(np.array([4.0, -3.0]))
opt = ad.Adam({"p": p}, lr=0.05)
for step in range(300):
    opt.zero_grad()
    with ad.Tape() as tape:
        obj = ad.tsum(ad.mul(p, p))
    tape.backward(obj)
    opt.step()
print(f"after 300 Adam steps on sum(p^2): p = {p.data}")
