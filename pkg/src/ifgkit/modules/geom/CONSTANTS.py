"""
Constants for oriented-box geometry.
"""


class GeomCONSTANTS:
    """
    Numerical constants shared by the IoU and NMS routines.
    """
    # clamp for degenerate intersection areas/volumes
    EPS: float = 1e-12

    BOX_FIELDS = ('x', 'y', 'z', 'l', 'w', 'h', 'theta')
    TARGET_FIELDS = ('tx', 'ty', 'tz', 'tw', 'tl', 'th', 'ttheta')

    class Oracle:
        """
        Default resolutions of the grid-sampling oracles.
        """
        BEV_RESOLUTION: int = 400
        HEIGHT_RESOLUTION: int = 400
