"""
Constants for the numerical core: checkpoint layout and verification defaults.
"""


class NetcoreCONSTANTS:
    """
    Constants shared by the parameter store, layers and gradient checker.
    """
    # l2 normalization refuses vectors shorter than this
    NORM_EPS: float = 1e-12

    class Checkpoint:
        """
        Binary checkpoint layout, little-endian.
        """
        MAGIC: bytes = b'IFGK'
        VERSION: int = 1
        HEADER_FORMAT: str = '<4sII'
        U32_FORMAT: str = '<I'
        PAYLOAD_DTYPE: str = '<f8'

    class GradCheck:
        """
        Central finite-difference defaults.
        """
        STEP: float = 1e-5
        TOLERANCE: float = 1e-4
        # denominators never drop below this, so tiny gradients are compared absolutely
        DENOMINATOR_FLOOR: float = 1e-3
        WORST_COUNT: int = 5
        # one-sided differences further apart than this mark a non-smooth point
        KINK_THRESHOLD: float = 1e-3

    class Adam:
        """
        Optimizer defaults.
        """
        LEARNING_RATE: float = 1e-3
        BETA1: float = 0.9
        BETA2: float = 0.999
        EPSILON: float = 1e-8
        ONE_CYCLE_PCT_START: float = 0.4
        ONE_CYCLE_DIV_FACTOR: float = 10.0
        ONE_CYCLE_FINAL_DIV_FACTOR: float = 1e4
