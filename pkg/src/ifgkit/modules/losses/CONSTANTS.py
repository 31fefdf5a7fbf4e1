"""
Constants for the detector losses.
"""


class LossCONSTANTS:
    """
    Default loss hyperparameters.
    """
    # probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP]
    PROB_CLAMP: float = 1e-7

    FOCAL_ALPHA: float = 0.25
    FOCAL_GAMMA: float = 2.0

    CONTRASTIVE_TAU: float = 0.1
    PROJECTION_DIM: int = 128
    # contrastive features must be unit length within this tolerance
    UNIT_NORM_TOLERANCE: float = 1e-9

    TEMPLATE_MU: float = 0.55

    LOSS_LOG_HEADER = ('epoch', 'l_rpn', 'l_conf', 'l_reg', 'l_temp', 'l_contra', 'total')
