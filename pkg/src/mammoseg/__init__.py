"""Mass localization in mammograms via texture-guided hierarchical thresholding."""
from .errors import MammosegError
from .imaging import GrayImage, Histogram, load_image, save_image, standardize, breast_mask
from .pipeline import PipelineConfig, detect_image

__all__ = ["MammosegError", "GrayImage", "Histogram", "load_image", "save_image",
           "standardize", "breast_mask", "PipelineConfig", "detect_image"]
__version__ = "0.1.0"
