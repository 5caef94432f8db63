"""Deterministic course assessment toolkit.

Core pieces: concept/score conversion (`scale`), the grading pipeline
(`policy`), individualized exam generation (`exambank`), submission intake
and grading feedback (`submissions`), cohort statistics (`analytics`), the
workspace/CLI layer (`workspace`, `cli`) and the HTTP calibration service
(`service`).
"""

__version__ = "0.1.0"
