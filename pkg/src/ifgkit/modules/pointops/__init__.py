from .core import EmptyInputError, PointCloud, farthest_point_sampling, ball_query, points_in_box, to_local_frame

__all__ = ['EmptyInputError', 'PointCloud', 'farthest_point_sampling', 'ball_query', 'points_in_box', 'to_local_frame']
