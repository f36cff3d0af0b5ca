"""Step-one decoder: a fixed linear map from syndrome to error estimate."""

from __future__ import annotations

import numpy as np

from . import gf2
from .color_code import ColorCode


def decode_step_one(code: ColorCode, s) -> np.ndarray:
    """Error estimate ``e_hat = H_f_pinv @ s_f`` for one syndrome or a batch.

    The estimate reproduces every coordinate of ``s`` when ``s`` came from
    an actual error, since the two dropped faces are linearly dependent on
    the kept ones. No attempt is made to pick a low-weight or pure error.
    """
    s_f = code.reduce_syndrome(s)
    return gf2.matmul(s_f, code.H_f_pinv.T)
