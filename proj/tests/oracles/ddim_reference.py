"""Reference loops for the DDIM round-trip values frozen in tests/test_schedule.cpp
and tests/test_dms.cpp. Plain float64 numpy, written independently of the C++ code."""
import numpy as np

MODEL_STEPS = 1000
betas = np.linspace(8.5e-4, 1.2e-2, MODEL_STEPS)
alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])


def grid(n):
    stride = MODEL_STEPS // n
    return [0] + [1 + stride * (k - 1) for k in range(1, n + 1)]


def gauss_eps(z, a, mu, sigma):
    if a == 1.0:
        return 0.0 * z
    return (z - np.sqrt(a) * mu) * np.sqrt(1 - a) / (a * sigma**2 + 1 - a)


def invert(z, n, mu, sigma):
    g = grid(n)
    out = [z]
    for k in range(1, n + 1):
        ap, at = alpha_bar[g[k - 1]], alpha_bar[g[k]]
        e = gauss_eps(z, ap, mu, sigma)
        z = np.sqrt(at) * (z - np.sqrt(1 - ap) * e) / np.sqrt(ap) + np.sqrt(1 - at) * e
        out.append(z)
    return out


def denoise(z, n, mu, sigma, k_from=None, k_to=0):
    g = grid(n)
    k_from = n if k_from is None else k_from
    for k in range(k_from, k_to, -1):
        ap, at = alpha_bar[g[k - 1]], alpha_bar[g[k]]
        e = gauss_eps(z, at, mu, sigma)
        z = np.sqrt(ap) * (z - np.sqrt(1 - at) * e) / np.sqrt(at) + np.sqrt(1 - ap) * e
    return z


if __name__ == "__main__":
    # single DDIM step example
    at, ap, z, e = 0.25, 0.64, 1.0, 0.5
    x0 = (z - np.sqrt(1 - at) * e) / np.sqrt(at)
    print("denoise example: x0=%.9f z_prev=%.9f" % (x0, np.sqrt(ap) * x0 + np.sqrt(1 - ap) * e))
    print("alpha_bar[1]=%.17g alpha_bar[1000]=%.17g" % (alpha_bar[1], alpha_bar[1000]))

    # 1-frame 1-pixel round trip: 100 inversion steps, 100 denoising steps
    for sigma in (0.0, 0.5):
        z0, mu = 0.3, 0.1
        traj = invert(z0, 100, mu, sigma)
        rec = denoise(traj[-1], 100, mu, sigma)
        print("roundtrip sigma=%.1f zT=%.17g rec=%.17g err=%.17g" % (sigma, traj[-1], rec, abs(rec - z0)))

    # re-inversion by 2 levels on the 50-step grid from level 30, then 2 denoising steps
    for sigma in (0.0, 0.5):
        g = grid(50)
        z = 0.7
        zz = z
        for k in (31, 32):
            ap, at = alpha_bar[g[k - 1]], alpha_bar[g[k]]
            e = gauss_eps(zz, ap, 0.1, sigma)
            zz = np.sqrt(at) * (zz - np.sqrt(1 - ap) * e) / np.sqrt(ap) + np.sqrt(1 - at) * e
        back = denoise(zz, 50, 0.1, sigma, k_from=32, k_to=30)
        print("reinvert l=2 sigma=%.1f up=%.17g back=%.17g err=%.17g" % (sigma, zz, back, abs(back - z)))
