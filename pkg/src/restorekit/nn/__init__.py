"""Minimal float64 convolutional network engine with hand-derived backprop."""
from restorekit.nn.finite_diff import GradcheckReport, gradcheck, kink_margin, smooth_probe
from restorekit.nn.layers import Conv2d, NearestUpsample, PixelShuffle, ReLU, Residual, Sequential, Sigmoid
from restorekit.nn.models import DenoiserConfig, Model, SrNetConfig
from restorekit.nn.serialize import load_weights, save_weights
from restorekit.nn.train import TrainConfig, TrainLog, TrainingError, train
