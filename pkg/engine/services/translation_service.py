"""
Dataset translation with a trained generator.
"""
import shutil
from pathlib import Path
from typing import List, Sequence

import numpy as np
import torch
from loguru import logger

from core.annotations import write_manifest
from core.datasets import to_chw
from core.exceptions import DataValidationError
from core.imaging import load_image, to_uint8, write_pixels
from core.normalization import NormalizationTarget, gan_to_unit, normalize_for
from core.schema import ImageSample
from translation.networks import Generator, check_gan_input

from .. import config


@torch.no_grad()
def translate_pixels(generator: Generator, samples: Sequence[ImageSample], batch_size: int = config.TRANSLATION_BATCH_SIZE,
                     device="cpu") -> List[np.ndarray]:
    """Translated H x W x 3 arrays in [0, 1], one per sample."""
    was_training = generator.training
    generator.eval()
    dtype = next(generator.parameters()).dtype
    outputs = []
    try:
        for start in range(0, len(samples), batch_size):
            chunk = [load_image(s) for s in samples[start:start + batch_size]]
            batch = torch.stack([to_chw(normalize_for(s, NormalizationTarget.GAN)) for s in chunk])
            batch = batch.to(device=device, dtype=dtype)
            check_gan_input(generator, batch)
            fake = gan_to_unit(generator(batch)).clamp(0.0, 1.0)
            outputs.extend(np.ascontiguousarray(f.permute(1, 2, 0).cpu().numpy(), dtype=np.float32) for f in fake)
    finally:
        generator.train(was_training)
    return outputs


def translate_dataset(
    generator: Generator,
    samples: Sequence[ImageSample],
    out_dir,
    batch_size: int = config.TRANSLATION_BATCH_SIZE,
    device="cpu",
) -> List[ImageSample]:
    """
    Translate every sample into the generator's target domain.

    Each fake keeps its source's landmark annotation (copied next to the
    fake image), source group and fold id. Images are written as 8-bit PNG
    files and listed in out_dir/manifest.jsonl.

    Raises:
        DataValidationError: a sample is not from the generator's source domain
    """
    direction = generator.direction
    foreign = sorted({s.path for s in samples if s.domain is not direction.source})
    if foreign:
        raise DataValidationError(
            f"{direction.value} generator got images outside the {direction.source.value} domain",
            errors={"paths": foreign[:10]},
        )

    out_dir = Path(out_dir)
    images_dir = out_dir / config.FAKE_IMAGES_DIR
    annotations_dir = out_dir / config.FAKE_ANNOTATIONS_DIR
    fakes = []
    pixels = translate_pixels(generator, samples, batch_size, device)
    for index, (sample, values) in enumerate(zip(samples, pixels)):
        stem = f"{index:05d}_{Path(sample.path).stem}"
        image_path = write_pixels(values, images_dir / f"{stem}.png")
        annotation_path = None
        if sample.annotation_path:
            annotation_path = annotations_dir / f"{stem}.json"
            annotation_path.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(sample.annotation_path, annotation_path)
        fakes.append(ImageSample(
            path=str(image_path),
            domain=direction.target,
            source_id=sample.source_id,
            width=sample.width,
            height=sample.height,
            fold_id=sample.fold_id,
            annotation_path=None if annotation_path is None else str(annotation_path),
            pixels=to_uint8(values).astype(np.float32) / 255.0,
        ))
    write_manifest(fakes, out_dir / config.FAKE_MANIFEST)
    logger.info("[TRANSLATE] {} {} images written to {}", len(fakes), direction.value, out_dir)
    return fakes
