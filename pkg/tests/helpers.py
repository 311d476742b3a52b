import numpy as np


def z_scores(samples, target):
    """Per-component |mean - target| in standard errors of the mean."""
    samples = np.asarray(samples)
    diff = np.abs(samples.mean(axis=0) - target)
    se = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff > 1e-12, np.inf, 0.0))
    return z


def complex_z_scores(samples, target):
    """z-scores of the real and imaginary parts, stacked."""
    samples = np.asarray(samples)
    target = np.asarray(target)
    return np.concatenate(
        [z_scores(samples.real, target.real).ravel(), z_scores(samples.imag, target.imag).ravel()]
    )
