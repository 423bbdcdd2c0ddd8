"""flowlab: a numerical laboratory for bounded Navier-Stokes solutions.

Modules: ``fields`` (grids and spectral operators), ``kernels`` (heat and
Oseen kernels), ``mild`` (Picard iteration for mild solutions),
``parabolic`` (scalar drift-diffusion and the Harnack probe), ``axisym``
(axisymmetric swirl solver), ``blowup`` (rescaling and blow-up
diagnostics), ``cli`` (command line).
"""

__version__ = "0.1.0"
