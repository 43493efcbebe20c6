"""Hot-kernel dispatch: binds the backend chosen in bgcomplete.backend."""

from .. import backend

if backend.ACTIVE == "numba":
    from . import numba_ops as _impl
else:
    from . import numpy_ops as _impl

warp_bilinear_gray = _impl.warp_bilinear_gray
warp_bilinear_color = _impl.warp_bilinear_color
edge_diffusion_fill = _impl.edge_diffusion_fill
poisson_sor = _impl.poisson_sor
conv2d = _impl.conv2d
upconv2 = _impl.upconv2
