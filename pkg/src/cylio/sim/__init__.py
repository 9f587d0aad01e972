"""Synthetic world: scenes, trajectories, sensors, datasets."""

from .dataset import Dataset, generate_dataset, load_dataset, save_dataset
from .scene import Scene, SceneParams, TrunkSpec, generate_scene
from .trajectory import Trajectory, make_trajectory
