"""
History of generated images for discriminator updates.
"""
import numpy as np
import torch

from core.exceptions import DataValidationError

from . import config


class ReplayBuffer:
    """
    Holds up to `capacity` past fakes. Until full, every incoming image is
    stored and returned. Afterwards each image is, with `swap_probability`,
    exchanged for a random stored one; otherwise it is returned as is.
    """

    def __init__(self, capacity: int = config.BUFFER_CAPACITY,
                 swap_probability: float = config.BUFFER_SWAP_PROBABILITY, seed: int = 0):
        if capacity < 0:
            raise DataValidationError(f"Buffer capacity must be non-negative, got {capacity}")
        if not 0.0 <= swap_probability <= 1.0:
            raise DataValidationError(f"Swap probability must lie in [0, 1], got {swap_probability}")
        self.capacity = capacity
        self.swap_probability = swap_probability
        self.images = []
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self.images)

    def push_and_pop(self, batch: torch.Tensor) -> torch.Tensor:
        if self.capacity == 0:
            return batch
        batch = batch.detach()
        returned = []
        for image in batch:
            image = image.unsqueeze(0)
            if len(self.images) < self.capacity:
                self.images.append(image.clone())
                returned.append(image)
            elif self.rng.random() < self.swap_probability:
                index = int(self.rng.integers(len(self.images)))
                returned.append(self.images[index].to(image.device).clone())
                self.images[index] = image.clone()
            else:
                returned.append(image)
        return torch.cat(returned, dim=0)

    def state_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "swap_probability": self.swap_probability,
            "images": [image.cpu() for image in self.images],
            "rng": self.rng.bit_generator.state,
        }

    def load_state_dict(self, state: dict):
        self.capacity = state["capacity"]
        self.swap_probability = state["swap_probability"]
        self.images = [image.clone() for image in state["images"]]
        self.rng.bit_generator.state = state["rng"]
