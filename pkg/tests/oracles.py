"""Independent reference computations used to freeze expected values.

Nothing here imports the package under test.
"""
import numpy as np


def davies_harte_fgn(n_steps, H, n_paths, rng):
    """Fractional Gaussian noise with unit-step variance by circulant embedding."""
    k = np.arange(n_steps + 1)
    gamma = 0.5 * ((k + 1.0) ** (2 * H) - 2.0 * k ** (2 * H) + np.abs(k - 1.0) ** (2 * H))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    assert lam.min() > -1e-10
    lam = np.clip(lam, 0, None)
    m = row.size
    w = rng.standard_normal((n_paths, m)) + 1j * rng.standard_normal((n_paths, m))
    y = np.fft.fft(np.sqrt(lam / m) * w, axis=1)
    return y.real[:, :n_steps]


def brute_ks(a, b):
    """sup |F_a - F_b| evaluated at every sample point, O(n*m)."""
    pts = np.concatenate([a, b])
    fa = (a[None, :] <= pts[:, None]).mean(axis=1)
    fb = (b[None, :] <= pts[:, None]).mean(axis=1)
    return np.max(np.abs(fa - fb))


def gaussian_pdf(x, var):
    return np.exp(-0.5 * x**2 / var) / np.sqrt(2 * np.pi * var)


def gaussian_peak_gap(v1, v2, n=200001, span=12.0):
    """sup_d |N(d; 0, v1) - N(d; 0, v2)| on a fine grid."""
    d = np.linspace(-span, span, n) * np.sqrt(max(v1, v2))
    return float(np.max(np.abs(gaussian_pdf(d, v1) - gaussian_pdf(d, v2))))


def left_riemann_ito_variance(H, c, t_start, t_end, n_steps):
    """Sum of 2Hc t^(2H-1) dt at left endpoints: the Euler variance for constant D(u)."""
    t = np.linspace(t_start, t_end, n_steps + 1)[:-1]
    dt = (t_end - t_start) / n_steps
    f = np.where(t > 0, 2 * H * c * np.where(t > 0, t, 1.0) ** (2 * H - 1), 0.0 if H > 0.5 else 2 * H * c)
    return float(np.sum(f) * dt)
