"""Power-series expansions of neural tangent kernels and their spectra."""

from .hermite import ActivationSpec, HermiteCoefficients, hermite_coefficients
from .powerseries import LayerCoefficients, LayerHyperparams, kappa_two_layer, propagate_layers
from .spectral import DataMatrix, SpectrumReport, assemble_gram, eig_sym, effective_rank
from .sphere import SphereSpectrum, funk_hecke_eigenvalue, sphere_spectrum

__all__ = [
    "ActivationSpec",
    "DataMatrix",
    "HermiteCoefficients",
    "LayerCoefficients",
    "LayerHyperparams",
    "SphereSpectrum",
    "SpectrumReport",
    "assemble_gram",
    "effective_rank",
    "eig_sym",
    "funk_hecke_eigenvalue",
    "hermite_coefficients",
    "kappa_two_layer",
    "propagate_layers",
    "sphere_spectrum",
]
