from .model import ModelConfig, MotionDiT  # noqa: F401
