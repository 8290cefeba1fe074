"""Equivariant harmonic maps from the plane to the 2-sphere with a potential.

The profile ``h(r)`` of an ``m``-equivariant map solves

    h'' + h'/r - (m^2/r^2) sin h cos h = g(h),   h(0) = 0,  h(inf) = pi.

Modules: :mod:`expr` (expression parser), :mod:`potential` (g, G and the
admissibility checks), :mod:`series` (start at the singular origin),
:mod:`integrate` (outward integration with events), :mod:`shooting`
(classification and the connecting orbit), :mod:`variational` (half-line
energy minimiser), :mod:`analysis` (criterion and diagnostics), :mod:`cli`.
"""

__version__ = "0.1.0"

from .potential import (Potential, PotentialSpec, build_potential, eval_G,  # noqa: E402
                        landau_lifshitz, zero_potential)

__all__ = ["Potential", "PotentialSpec", "build_potential", "eval_G", "landau_lifshitz",
           "zero_potential", "__version__"]
