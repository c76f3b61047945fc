"""Batch workflows behind the command-line subcommands.

Each ``cmd_*`` takes a :class:`PipelineConfig`, writes its outputs under
``config.out`` and returns a :class:`DatasetManifest`. File names in manifests
are relative to the output directory.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import augment, renderer, segmap, volumesh, warp
from .config import ConfigError, DatasetManifest
from .errors import SelfieGenError, SimulationFailure

log = logging.getLogger(__name__)

SELFIE_PARTS = ("face", "upper", "lower", "shoes")


def run_items(fn, items, jobs):
    """Map ``fn`` over ``items``; results come back in input order."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def load_rgb(path):
    return np.asarray(Image.open(path).convert("RGB"))


def save_rgb(image, path):
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)


def _out_dir(config):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- gen-pairs -------------------------------------------------------------

def _landmarks_path(raw_path):
    return raw_path.with_name(raw_path.stem + ".landmarks.json")


def _gen_pairs_one(job):
    raw_path, config = job
    mesh_id = raw_path.stem
    out = Path(config.out)
    try:
        vol = volumesh.load_volume(raw_path)
        mesh = volumesh.marching_cubes(vol, config.iso_level)
        if mesh.n_triangles == 0:
            return None, {"id": mesh_id, "reason": f"no surface at iso level {config.iso_level}"}
        mesh = volumesh.assign_nearest_colors(mesh, vol)
        camera = renderer.Camera(
            rotation=np.eye(3) if config.rotation is None else np.asarray(config.rotation),
            distance=1.0, focal_f0=config.focal_f0, image_size=config.resolution,
            subject_center=vol.center())
        lighting = renderer.PhongLighting(tuple(config.light_direction), config.ambient,
                                          config.diffuse, config.specular, config.shininess)
        landmarks = None
        lm_path = _landmarks_path(raw_path)
        if lm_path.exists():
            lm = json.loads(lm_path.read_text())
            landmarks = [np.asarray(lm[k], dtype=np.float64) for k in ("eye_left", "eye_right", "mouth")]
        series = renderer.render_distance_series(
            mesh, camera, lighting, config.input_distances, config.gt_distance,
            tuple(config.background_color))
    except (SelfieGenError, OSError, ValueError, KeyError) as exc:
        return None, {"id": mesh_id, "reason": str(exc)}

    def finish(image, d):
        if landmarks is None:
            return image.rgb
        pix = [renderer.project_points(camera.at_distance(d), p)[0][0] for p in landmarks]
        crop, _ = segmap.align_face(image.rgb, *pix, out_size=config.resolution)
        return crop

    input_names, gt_name = renderer.series_filenames(mesh_id, [d for d, _ in series.inputs])
    try:
        save_rgb(finish(series.ground_truth, series.gt_distance), out / gt_name)
        for (d, image), name in zip(series.inputs, input_names):
            save_rgb(finish(image, d), out / name)
    except SelfieGenError as exc:
        return None, {"id": mesh_id, "reason": f"face alignment failed: {exc}"}
    ply_name = f"{mesh_id}.ply"
    volumesh.write_ply(mesh, out / ply_name)
    entry = {
        "id": mesh_id,
        "mesh": ply_name,
        "vertices": mesh.n_vertices,
        "triangles": mesh.n_triangles,
        "aligned": landmarks is not None,
        "ground_truth": gt_name,
        "pairs": [{"input": name, "ground_truth": gt_name, "distance": d}
                  for (d, _), name in zip(series.inputs, input_names)],
        "files": [ply_name, gt_name] + input_names,
    }
    return entry, None


def cmd_gen_pairs(config):
    config.require("volumes_dir", "iso_level")
    raws = sorted(Path(config.volumes_dir).glob("*.raw"))
    if not raws:
        raise ConfigError(f"no volumes (*.raw) in {config.volumes_dir}")
    out = _out_dir(config)
    manifest = DatasetManifest("gen-pairs", {
        "iso_level": config.iso_level, "focal_f0": config.focal_f0,
        "input_distances": list(config.input_distances), "gt_distance": config.gt_distance,
        "resolution": config.resolution,
    })
    for entry, skip in run_items(_gen_pairs_one, [(p, config) for p in raws], config.jobs):
        if skip is not None:
            log.warning("skipping volume %s: %s", skip["id"], skip["reason"])
            manifest.skipped.append(skip)
        else:
            manifest.entries.append(entry)
    manifest.write(out)
    return manifest


# --- simulate-selfies ----------------------------------------------------------

def load_typical(typical_dir, part, threshold):
    """``typical_<part>.json`` or a directory ``<part>/`` of example keypoint files to average."""
    base = Path(typical_dir)
    single = base / f"typical_{part}.json"
    if single.exists():
        return warp.load_keypoints(single)
    examples = sorted((base / part).glob("*.json")) if (base / part).is_dir() else []
    if not examples:
        raise ConfigError(f"no typical keypoints for {part!r} in {typical_dir}")
    return warp.typical_keypoints([warp.load_keypoints(p) for p in examples], threshold)


def face_landmarks(kps, threshold):
    """(eye_left, eye_right, mouth) in image coordinates, or None if unavailable.

    The subject's right eye appears on the image left in a frontal view.
    """
    pts = kps.confident(threshold)
    if "REye" not in pts or "LEye" not in pts:
        return None
    if "Mouth" in pts:
        mouth = (pts["Mouth"].x, pts["Mouth"].y)
    elif "MouthLeft" in pts and "MouthRight" in pts:
        mouth = ((pts["MouthLeft"].x + pts["MouthRight"].x) / 2, (pts["MouthLeft"].y + pts["MouthRight"].y) / 2)
    else:
        return None
    return (pts["REye"].x, pts["REye"].y), (pts["LEye"].x, pts["LEye"].y), mouth


def _simulate_one(job):
    img_path, typical, config = job
    stem = img_path.stem
    out = Path(config.out)
    kp_path = img_path.with_name(stem + ".keypoints.json")
    files, skipped = [], []
    try:
        image = load_rgb(img_path)
        detected = warp.load_keypoints(kp_path)
    except (OSError, ValueError, KeyError) as exc:
        return {"id": stem, "files": []}, [{"id": stem, "part": None, "reason": str(exc)}]
    size = (config.selfie_size, config.selfie_size)
    for part in SELFIE_PARTS:
        name = f"{stem}_{part}.png"
        try:
            if part == "face":
                lm = face_landmarks(detected, config.confidence_threshold)
                if lm is None:
                    raise SimulationFailure("face: eye/mouth keypoints missing or below threshold")
                crop, _ = segmap.align_face(image, *lm, out_size=config.selfie_size)
            else:
                crop, _ = warp.simulate_selfie(image, detected, typical[part], part, size,
                                               threshold=config.confidence_threshold)
        except SelfieGenError as exc:
            skipped.append({"id": stem, "part": part, "reason": str(exc)})
            continue
        save_rgb(crop, out / name)
        files.append(name)
    return {"id": stem, "files": files}, skipped


def cmd_simulate_selfies(config):
    config.require("images_dir", "typical_dir")
    typical = {p: load_typical(config.typical_dir, p, config.confidence_threshold)
               for p in ("upper", "lower", "shoes")}
    images = sorted(p for p in Path(config.images_dir).glob("*.png"))
    out = _out_dir(config)
    manifest = DatasetManifest("simulate-selfies", {
        "selfie_size": config.selfie_size, "confidence_threshold": config.confidence_threshold})
    jobs = [(p, typical, config) for p in images]
    for entry, skipped in run_items(_simulate_one, jobs, config.jobs):
        manifest.entries.append(entry)
        for s in skipped:
            log.warning("skipping %s/%s: %s", s["id"], s["part"], s["reason"])
        manifest.skipped.extend(skipped)
    manifest.write(out)
    return manifest


# --- rank-poses / make-mask / canny-target ---------------------------------------

def _taxonomy(config):
    return segmap.load_taxonomy(config.taxonomy) if config.taxonomy else None


def _load_map(path, taxonomy):
    if taxonomy is None:
        # without a taxonomy, label 0 is background and every other label is the person
        labels = np.asarray(Image.open(path))
        taxonomy = {int(i): segmap.LabelInfo(str(i), person=bool(i != 0)) for i in np.unique(labels)}
    return segmap.load_semantic_map(path, taxonomy)


def cmd_rank_poses(config):
    config.require("selfie_upper_map", "selfie_lower_map", "selfie_shoes_map",
                   "collection_dir", "taxonomy")
    tax = _taxonomy(config)
    sets = segmap.selfie_label_sets(
        segmap.load_semantic_map(config.selfie_upper_map, tax),
        segmap.load_semantic_map(config.selfie_lower_map, tax),
        segmap.load_semantic_map(config.selfie_shoes_map, tax),
        config.selfie_min_pixels)
    paths = sorted(Path(config.collection_dir).glob("*.png"))
    maps = [segmap.load_semantic_map(p, tax) for p in paths]
    ranked = segmap.rank_collection(sets, maps, config.reference_min_pixels)
    out = _out_dir(config)
    result = [{"index": i, "path": paths[i].name, "score": s} for i, s in ranked]
    (out / "ranked.json").write_text(json.dumps(result, indent=2) + "\n")
    manifest = DatasetManifest("rank-poses", {
        "selfie_min_pixels": config.selfie_min_pixels,
        "reference_min_pixels": config.reference_min_pixels,
        "bbox_factor": config.bbox_factor,
        "selfie_label_sets": {k: sorted(v) for k, v in zip(("upper", "lower", "shoes"), sets)},
    })
    files = ["ranked.json"]
    if ranked:
        top = maps[ranked[0][0]]
        try:
            box = segmap.person_bbox(top)
        except SelfieGenError as exc:
            manifest.skipped.append({"id": paths[ranked[0][0]].name, "reason": str(exc)})
        else:
            mask = segmap.scale_bbox_to_mask(box, config.bbox_factor, (top.width, top.height))
            segmap.save_mask_png(mask, out / "top_mask.png")
            files.append("top_mask.png")
    manifest.entries.append({"id": "ranking", "files": files, "top": result[0] if result else None})
    manifest.write(out)
    return manifest


def cmd_make_mask(config, kind="bbox"):
    config.require("semantic_map")
    smap = _load_map(config.semantic_map, _taxonomy(config))
    out = _out_dir(config)
    stem = Path(config.semantic_map).stem
    if kind == "bbox":
        mask = segmap.scale_bbox_to_mask(segmap.person_bbox(smap), config.bbox_factor,
                                         (smap.width, smap.height))
        name = f"{stem}_mask.png"
    elif kind == "foreground":
        mask = segmap.dilate(smap.person_mask(), config.dilate_radius)
        name = f"{stem}_foreground.png"
    else:
        raise ConfigError(f"unknown mask kind {kind!r}")
    segmap.save_mask_png(mask, out / name)
    manifest = DatasetManifest("make-mask", {
        "kind": kind, "bbox_factor": config.bbox_factor, "dilate_radius": config.dilate_radius})
    manifest.entries.append({"id": stem, "files": [name]})
    manifest.write(out)
    return manifest


def cmd_canny_target(config):
    config.require("semantic_map")
    smap = _load_map(config.semantic_map, _taxonomy(config))
    edges = segmap.canny_from_semantic(smap, config.canny_low, config.canny_high)
    out = _out_dir(config)
    stem = Path(config.semantic_map).stem
    name = f"{stem}_canny.png"
    Image.fromarray(edges, mode="L").save(out / name)
    manifest = DatasetManifest("canny-target", {"low": config.canny_low, "high": config.canny_high})
    manifest.entries.append({"id": stem, "files": [name], "edge_pixels": int((edges > 0).sum())})
    manifest.write(out)
    return manifest


# --- augment ------------------------------------------------------------------------

def _load_candidate(map_path, taxonomy, background):
    bbox_path = map_path.with_name(map_path.stem + ".bboxes.json")
    bboxes = {}
    if bbox_path.exists():
        for part, box in json.loads(bbox_path.read_text()).items():
            bboxes[part] = segmap.BBox(*(int(v) for v in box))
    else:
        smap = segmap.load_semantic_map(map_path, taxonomy)
        for part in ("upper", "lower", "shoes"):
            try:
                bboxes[part] = segmap.part_bbox(smap, part)
            except SelfieGenError:
                continue
    return augment.Candidate(background, bboxes)


def cmd_augment(config, mode="finetune"):
    out = _out_dir(config)
    if mode == "finetune":
        config.require("background", "pool_dir")
        background = load_rgb(config.background)
        tax = _taxonomy(config)
        map_paths = sorted(Path(config.pool_dir).glob("*.png"))
        if not map_paths:
            raise ConfigError(f"no candidate maps (*.png) in {config.pool_dir}")
        if tax is None and not all(p.with_name(p.stem + ".bboxes.json").exists() for p in map_paths):
            raise ConfigError("--taxonomy is required unless every candidate has a .bboxes.json")
        pool = [_load_candidate(p, tax, background) for p in map_paths]
        selfies = {part: load_rgb(getattr(config, f"{part}_image"))
                   for part in augment.PARTS if getattr(config, f"{part}_image")}
        if not selfies:
            raise ConfigError("finetune mode needs at least one selfie image (--face/--upper/--lower/--shoes)")
        plan = augment.AugmentPlan(config.pool_size, config.finetune_outputs, config.rng_seed)
        images, records = augment.build_finetune_set(pool, selfies, plan)
        manifest = DatasetManifest("augment", {"mode": mode, "pool_size": plan.pool_size,
                                               "num_outputs": plan.num_outputs, "rng_seed": plan.rng_seed})
        for img, rec in zip(images, records):
            name = f"finetune_{rec['index']:03d}.png"
            save_rgb(img, out / name)
            manifest.entries.append({"file": name, **rec, "files": [name]})
    elif mode == "dreambooth":
        sources = {"face": (config.face_image, config.face_res_range),
                   "shoes": (config.shoes_image, config.shoes_res_range)}
        sources = {k: v for k, v in sources.items() if v[0] is not None}
        if not sources:
            raise ConfigError("dreambooth mode needs --face and/or --shoes")
        manifest = DatasetManifest("augment", {
            "mode": mode, "count": config.dreambooth_outputs, "resolution": config.dreambooth_resolution,
            "ranges": {k: list(v[1]) for k, v in sources.items()}, "rng_seed": config.rng_seed})
        for part, (path, (lo, hi)) in sorted(sources.items()):
            stream = augment.PARTS.index(part)
            images, records = augment.dreambooth_pad_augment(
                load_rgb(path), lo, hi, config.dreambooth_resolution, config.dreambooth_outputs,
                rng_seed=(config.rng_seed, stream), center_crop=config.center_crop)
            for img, rec in zip(images, records):
                name = f"{part}_{rec['index']:03d}.png"
                save_rgb(img, out / name)
                manifest.entries.append({"file": name, "source_part": part, "candidate_index": None,
                                         **rec, "files": [name]})
    else:
        raise ConfigError(f"unknown augment mode {mode!r}")
    manifest.write(out)
    return manifest
