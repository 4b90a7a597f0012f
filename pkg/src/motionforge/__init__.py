"""motionforge: joint camera/object motion control at desk scale."""

__version__ = "0.1.0"
