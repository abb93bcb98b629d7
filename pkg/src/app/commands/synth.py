"""``synth``: build the synthetic fixture dataset."""

from dataclasses import replace
from pathlib import Path

import structlog

from ..repositories.fixtures import save_coarse, save_template, write_manifest
from ..repositories.nocs import write_nocs_frame
from ..synth.coarse import build_coarse_pointcloud
from ..synth.scenes import sample_views
from ..synth.shapes import cage_perturb, generate_category, template_mesh
from .context import CommandContext

logger = structlog.get_logger()

# Seed offsets keep the template, instance and view streams independent.
TEMPLATE_SEED_OFFSET = 1
VIEW_SEED_STRIDE = 1000


def instance_name(category: str, index: int) -> str:
    return f"{category}_{index:03d}"


def cmd_synth(ctx: CommandContext) -> Path:
    """Write train/test splits, the category template and the manifest.

    Training instances also get their coarse multi-view point cloud. Every random stream is
    derived from ``cfg.seed`` and the category seed, so rerunning with the same config
    rewrites identical files.

    Returns:
        The dataset root.

    Raises:
        InvalidSpec: If the category parameters cannot produce valid shapes.
        NotVisible: If an instance cannot be placed in view.
        IoFailure: If a file cannot be written.
    """
    cfg = ctx.cfg
    data = cfg.data
    root = ctx.dataset_root
    spec = data.category.model_copy(
        update={"instance_count": data.train_instances + data.test_instances}
    )
    logger.info(
        "Generating dataset",
        root=str(root),
        category=spec.name,
        instances=spec.instance_count,
        config_hash=cfg.config_hash(),
    )

    template = cage_perturb(
        template_mesh(spec), data.template_perturbation, spec.seed + TEMPLATE_SEED_OFFSET
    )
    save_template(root, template)

    meshes = generate_category(spec)
    splits: dict[str, list[str]] = {"train": [], "test": []}
    for index, mesh in enumerate(meshes):
        split = "train" if index < data.train_instances else "test"
        name = instance_name(spec.name, index)
        view_seed = cfg.seed * 1_000_003 + index * VIEW_SEED_STRIDE
        views = [
            replace(v, category=spec.name)
            for v in sample_views(mesh, data, cfg.renderer, data.views_per_instance, view_seed)
        ]
        for frame, view in enumerate(views):
            write_nocs_frame(root / split, name, frame, view, model_name=name)

        if split == "train":
            coarse = build_coarse_pointcloud(
                views,
                n_views=min(data.coarse_views, len(views)),
                bandwidth=data.meanshift_bandwidth,
                seed=view_seed,
            )
            save_coarse(root, "train", name, coarse)
        splits[split].append(name)
        logger.info("Instance written", instance=name, split=split, views=len(views))

    write_manifest(
        root,
        {
            "category": spec.model_dump(mode="json"),
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "views_per_instance": data.views_per_instance,
            "noise_sigma": data.noise_sigma,
            "intrinsics": cfg.renderer.intrinsics.model_dump(mode="json"),
            "splits": splits,
        },
    )
    logger.info(
        "Dataset written",
        root=str(root),
        train=len(splits["train"]),
        test=len(splits["test"]),
    )
    return root
