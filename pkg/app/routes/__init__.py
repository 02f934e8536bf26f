from .runs import runs_router


__all__ = ("runs_router",)
