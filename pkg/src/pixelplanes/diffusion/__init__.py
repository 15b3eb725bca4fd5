"""Desk-scale joint video + dense-prediction diffusion."""

from .checkpoint import load_checkpoint, save_checkpoint
from .latents import concat_latents, split_latents
from .model import DenoiserConfig, TaskId, ToyDenoiser, build_model, denoise, expand_io_channels, task_time_embedding
from .sampler import DEFAULT_STEPS, ddim_sample, sample, sampling_timesteps
from .schedule import NoiseSchedule, add_noise, make_schedule
from .train import (
    Batch,
    ToyCorpus,
    TrainConfig,
    TrainingDiverged,
    denoising_loss,
    make_optimizer,
    sample_task,
    train,
    train_step,
    training_loss,
)

__all__ = [
    "Batch",
    "DEFAULT_STEPS",
    "DenoiserConfig",
    "NoiseSchedule",
    "TaskId",
    "ToyCorpus",
    "ToyDenoiser",
    "TrainConfig",
    "TrainingDiverged",
    "add_noise",
    "build_model",
    "concat_latents",
    "ddim_sample",
    "denoise",
    "denoising_loss",
    "expand_io_channels",
    "load_checkpoint",
    "make_optimizer",
    "make_schedule",
    "sample",
    "sample_task",
    "sampling_timesteps",
    "save_checkpoint",
    "split_latents",
    "task_time_embedding",
    "train",
    "train_step",
    "training_loss",
]
