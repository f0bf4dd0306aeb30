#!/usr/bin/env python3
"""Reference values for tests/test_reference.cpp, computed with PyTorch autograd.

The network, inputs and labels are closed-form so the C++ test can rebuild them
exactly. Run this script and paste its output into the test when the instance
changes.
"""
import math

import torch

torch.set_default_dtype(torch.float64)

L, M, R, M0, MOUT, N = 2, 2, 1, 3, 3, 4
A, B = 0.6, 0.4
LABELS = [0, 2, 1, 2]


def widths():
    return [M0] + [(L - k + 1) ** R * M for k in range(1, L + 1)] + [MOUT]


def theta(k, rows, cols):
    return torch.tensor([[0.3 * math.sin(1.7 * (i + 1) + 0.9 * (j + 1) + k) for j in range(cols)] for i in range(rows)])


def inputs():
    return torch.tensor([[math.cos(0.5 * c + 1.3 * i + 0.2) for i in range(N)] for c in range(M0)])


def phi(s):
    return A * s + B * s.abs()


def forward(params, x, keep_u=False):
    w = widths()
    f = x
    us, fs = [], [x]
    for k in range(1, L + 1):
        u = params[k - 1] @ f
        if keep_u:
            u.retain_grad()
        us.append(u)
        f = phi(math.sqrt(M) * u) / math.sqrt(w[k])
        fs.append(f)
    out = params[L] @ f
    if keep_u:
        out.retain_grad()
    us.append(out)
    return out, us, fs


def losses(out):
    y = torch.tensor(LABELS)
    return torch.logsumexp(out, dim=0) - out[y, torch.arange(N)]


def main():
    w = widths()
    params = [theta(k, w[k], w[k - 1]).requires_grad_(True) for k in range(1, L + 2)]
    x = inputs()
    out, us, fs = forward(params, x, keep_u=True)
    ell = losses(out)
    loss = ell.mean()
    # Summing per-sample losses gives per-sample backward vectors as columns.
    ell.sum().backward()
    grads = [p.grad / N for p in params]
    bs = [u.grad for u in us]
    xi = []
    for k in range(1, L + 2):
        fn = (fs[k - 1].detach() ** 2).sum() / N
        bn = (bs[k - 1] ** 2).sum() / N
        xi.append(1.0 / math.sqrt((fn * bn).item()))
    u_dir = [xi[k] * grads[k].detach() for k in range(L + 1)]

    base = [p.detach() for p in params]

    def along(eps):
        ps = [b + eps * d for b, d in zip(base, u_dir)]
        o, _, _ = forward(ps, x)
        return losses(o).mean()

    e = torch.zeros((), requires_grad=True)
    v = along(e)
    (d1,) = torch.autograd.grad(v, e, create_graph=True)
    (d2,) = torch.autograd.grad(d1, e, create_graph=True)
    (d3,) = torch.autograd.grad(d2, e)

    print(f"loss            = {loss.item():.17g}")
    for k, g in enumerate(grads, start=1):
        print(f"grad_{k}[0,0]     = {g[0, 0].item():.17g}   ||grad_{k}||^2 = {(g ** 2).sum().item():.17g}")
    print("xi              =", ", ".join(f"{v:.17g}" for v in xi))
    print(f"first (d1)      = {d1.item():.17g}")
    print(f"second (d2)     = {d2.item():.17g}")
    print(f"third (d3)      = {d3.item():.17g}")

    # Third derivative of logsumexp(z) - z_y at a fixed logit vector.
    z = torch.tensor([0.3, -1.2, 0.7])
    t = torch.autograd.functional.jacobian(
        lambda zz: torch.autograd.functional.hessian(lambda q: torch.logsumexp(q, 0) - q[1], zz, create_graph=True),
        z,
    )
    print("tress[0,0,0], [0,1,2], [2,2,1] =", f"{t[0,0,0].item():.17g}, {t[0,1,2].item():.17g}, {t[2,2,1].item():.17g}")


if __name__ == "__main__":
    main()
