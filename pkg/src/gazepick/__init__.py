"""gazepick: gaze-driven object selection and simulated pick-and-place.

Pipeline: gaze rays hit a bounded collision plane; a dwell detector turns
stable fixations into selection events; the fixation pixel is rescaled into
the user-view image and hit-tested against detections; the label is matched
into the robot-view detections; a matched instance drives a simulated arm.
"""

__version__ = "0.1.0"

from gazepick.kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
