"""Regenerate the packaged hand morphology presets.

Hands follow a shared parametric scheme: palm root at the wrist, fingers
extending along local +x and curling toward -y, thumb mounted on the -y
side curling back toward +y, so the finger/thumb gap spans the local y
axis. Open poses put every joint at its limit midpoint except the thumb
flexion chain, which sits at its open limit.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from graspsynth.hand import PRESET_DIR, morphology_from_dict, morphology_to_dict

ABD_Y = [0.0, 1.0, 0.0]
FLEX_NEG = [0.0, 0.0, -1.0]  # finger flexion: +x toward -y
FLEX_POS = [0.0, 0.0, 1.0]  # thumb flexion: +x toward +y
TWIST_X = [1.0, 0.0, 0.0]


def link(parent, offset, axes=(), limits=(), radius=0.01, inertia=2e-4, kp=2.0, kd=0.05):
    return {
        "parent": parent,
        "offset": list(offset),
        "axes": [list(a) for a in axes],
        "limits": [list(l) for l in limits],
        "radius": radius,
        "inertia": inertia,
        "kp": kp,
        "kd": kd,
    }


def finger(links, parent, mount, segs, mount_radius=0.012):
    """Append a mount link plus one link per (length, axes, limits, radius)."""
    links.append(link(parent, mount, radius=mount_radius))
    base = len(links) - 1
    for length, axes, limits, radius in segs:
        links.append(link(len(links) - 1, [length, 0.0, 0.0], axes, limits, radius))
    return base


def allegro16():
    # proportions settled empirically against the grasp feasibility battery
    links = [link(-1, [0.0084, 0.01, 0.0], radius=0.0327)]
    fl = [[-0.8, 1.15]]
    fr = 0.0135
    for z in (0.0376, 0.0, -0.0376):
        finger(
            links,
            0,
            [0.045, 0.008, z],
            [
                (0.050, [ABD_Y, FLEX_NEG], [[-0.35, 0.35]] + fl, fr),
                (0.040, [FLEX_NEG], fl, fr * 0.95),
                (0.036, [FLEX_NEG], fl, fr * 0.9),
            ],
            mount_radius=fr,
        )
    tfl = [[-0.35, 1.42]]
    tr = fr + 0.002
    finger(
        links,
        0,
        [0.012, -0.0518, 0.0],
        [
            (0.0483, [ABD_Y, FLEX_POS], [[-0.7, 0.7]] + tfl, tr),
            (0.0399, [FLEX_POS], tfl, tr * 0.95),
            (0.0357, [FLEX_POS], tfl, tr * 0.9),
        ],
        mount_radius=tr,
    )
    return {
        "name": "allegro16",
        "wrist_pd_gains": [216.3, 39.7],
        "thumb_tip_link": 16,
        "middle_third_joint_link": 7,
        "links": links,
        "thumb_dofs_open": {"flex_low": [13, 14, 15], "abd_mid": [12]},
    }


def mano45():
    links = [link(-1, [0.0, 0.0, 0.0], radius=0.032)]
    axes_f = [ABD_Y, FLEX_NEG, TWIST_X]
    lim_f = [[-0.35, 0.35], [-0.8, 0.9], [-0.25, 0.25]]
    layout = [
        ([0.048, 0.012, 0.033], (0.042, 0.028, 0.022)),
        ([0.050, 0.012, 0.011], (0.046, 0.030, 0.024)),
        ([0.048, 0.012, -0.011], (0.042, 0.028, 0.022)),
        ([0.044, 0.012, -0.033], (0.034, 0.024, 0.019)),
    ]
    for mount, lens in layout:
        finger(
            links,
            0,
            mount,
            [(ln, axes_f, lim_f, r) for ln, r in zip(lens, (0.010, 0.009, 0.008))],
            mount_radius=0.010,
        )
    axes_t = [ABD_Y, FLEX_POS, TWIST_X]
    lim_t = [[-0.6, 0.6], [-0.2, 1.2], [-0.25, 0.25]]
    finger(
        links,
        0,
        [0.025, -0.055, 0.012],
        [(ln, axes_t, lim_t, r) for ln, r in zip((0.046, 0.036, 0.030), (0.012, 0.011, 0.010))],
        mount_radius=0.012,
    )
    return {
        "name": "mano45",
        "wrist_pd_gains": [200.0, 24.0],
        "thumb_tip_link": 20,
        "middle_third_joint_link": 7,
        "links": links,
        "thumb_dofs_open": {"flex_low": [37, 40, 43], "abd_mid": [36]},
    }


def shadow22():
    links = [link(-1, [0.0, 0.0, 0.0], radius=0.032)]
    fl = [[-0.8, 0.9]]
    for z in (0.026, 0.0, -0.026):
        finger(
            links,
            0,
            [0.050, 0.012, z],
            [
                (0.044, [ABD_Y, FLEX_NEG], [[-0.35, 0.35]] + fl, 0.011),
                (0.030, [FLEX_NEG], fl, 0.010),
                (0.024, [FLEX_NEG], fl, 0.009),
            ],
        )
    # little finger gains an extra palm-arch metacarpal joint
    links.append(link(0, [0.030, 0.012, -0.050], radius=0.011))
    links.append(
        link(len(links) - 1, [0.020, 0.0, 0.0], [TWIST_X], [[-0.1, 0.7]], 0.011)
    )
    for length, axes, limits, radius in [
        (0.040, [ABD_Y, FLEX_NEG], [[-0.35, 0.35]] + fl, 0.010),
        (0.026, [FLEX_NEG], fl, 0.009),
        (0.022, [FLEX_NEG], fl, 0.009),
    ]:
        links.append(link(len(links) - 1, [length, 0.0, 0.0], axes, limits, radius))
    finger(
        links,
        0,
        [0.025, -0.055, 0.0],
        [
            (0.048, [ABD_Y, FLEX_POS], [[-0.6, 0.6], [-0.2, 1.2]], 0.012),
            (0.038, [FLEX_POS, TWIST_X], [[-0.2, 1.3], [-0.3, 0.3]], 0.011),
            (0.032, [FLEX_POS], [[-0.2, 1.3]], 0.010),
        ],
        mount_radius=0.012,
    )
    return {
        "name": "shadow22",
        "wrist_pd_gains": [200.0, 24.0],
        "thumb_tip_link": 21,
        "middle_third_joint_link": 7,
        "links": links,
        "thumb_dofs_open": {"flex_low": [18, 19, 21], "abd_mid": [17]},
    }


def faive30():
    links = [link(-1, [0.0, 0.0, 0.0], radius=0.032)]
    lim = [[-0.3, 0.3], [-0.8, 0.9]]
    layout = [
        ([0.048, 0.012, 0.033], (0.044, 0.032, 0.026)),
        ([0.050, 0.012, 0.011], (0.046, 0.034, 0.028)),
        ([0.048, 0.012, -0.011], (0.044, 0.032, 0.026)),
        ([0.044, 0.012, -0.033], (0.038, 0.028, 0.022)),
    ]
    for mount, lens in layout:
        finger(
            links,
            0,
            mount,
            [(ln, [ABD_Y, FLEX_NEG], lim, r) for ln, r in zip(lens, (0.011, 0.010, 0.009))],
            mount_radius=0.011,
        )
    finger(
        links,
        0,
        [0.025, -0.055, 0.006],
        [
            (ln, [ABD_Y, FLEX_POS], [[-0.4, 0.4], [-0.2, 1.2]], r)
            for ln, r in zip((0.048, 0.038, 0.030), (0.012, 0.011, 0.010))
        ],
        mount_radius=0.012,
    )
    return {
        "name": "faive30",
        "wrist_pd_gains": [200.0, 24.0],
        "thumb_tip_link": 20,
        "middle_third_joint_link": 7,
        "links": links,
        "thumb_dofs_open": {"flex_low": [25, 27, 29], "abd_mid": [24]},
    }


def bake_open_pose(data):
    """Limit-midpoint neutral with the thumb flexion chain at its open limit."""
    spec = data.pop("thumb_dofs_open")
    morph = morphology_from_dict(dict(data, open_pose=None) if False else data)
    pose = 0.5 * (morph.limits_low + morph.limits_high)
    for d in spec["flex_low"]:
        pose[d] = morph.limits_low[d]
    data["open_pose"] = pose.tolist()
    return data


def main():
    PRESET_DIR.mkdir(exist_ok=True)
    for build in (allegro16, mano45, shadow22, faive30):
        data = bake_open_pose(build())
        morph = morphology_from_dict(data)
        out = PRESET_DIR / f"{morph.name}.json"
        out.write_text(json.dumps(morphology_to_dict(morph), indent=1) + "\n")
        print(f"{morph.name}: links={len(morph.links)} dof={morph.total_dof} -> {out}")


if __name__ == "__main__":
    main()
