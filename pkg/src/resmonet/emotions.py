"""The fixed 7-emotion class order used everywhere a class index appears:
model outputs, wire-format frames, dataset class directories, plots."""

EMOTIONS = ("anger", "disgust", "fear", "happiness", "sadness", "surprise", "neutral")
