"""HTTP calibration service."""

from gradeforge.service.app import create_app

__all__ = ["create_app"]
