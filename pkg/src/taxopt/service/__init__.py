"""HTTP service layer: FastAPI app plus pydantic wire schemas."""

from .app import app

__all__ = ["app"]
