"""Files for testing

Use canyon_scene_json to test tracing from a scene file. Its TX/RX geometry
has hand-computed LOS and first-order wall paths (see canyon_scene_contents()).

Use one_ray_csv/two_ray_csv to test the ray dataset without tracing.
    one_ray_csv
        one_ray.summary.json (sidecar with the carrier frequency)
    two_ray_csv
"""
import json
import os

from chanforge.abspath import AbsPath
from chanforge.ray_model import RAY_CSV_COLUMNS, summary_path_for

# 100 m / c in ns
LOS_100M_DELAY_NS = "333.564095198152"


def canyon_scene_contents(wall_height_m=40.0, max_order=2):
    """TX (0, 2, 10) and RX1 (100, 5, 1.5) between walls y = 0 and y = 20.

    LOS length = sqrt(10081.25). The single bounce on y = 0 has the image TX
    (0, -2, 10), length sqrt(10121.25) and reflection point (200/7, 0, 53/7).
    """
    return json.dumps(
        {
            "wall_y0": 0.0,
            "wall_y1": 20.0,
            "wall_height_m": wall_height_m,
            "ground": True,
            "tx_id": "TX1",
            "tx": [0.0, 2.0, 10.0],
            "rx": [{"id": "RX1", "pos": [100.0, 5.0, 1.5]}],
            "frequency_hz": 60e9,
            "refl_coeff": [-0.8, 0.0],
            "max_order": max_order,
        },
        indent=4,
    )


def ray_row(
    gain_re="1",
    gain_im="0",
    delay_ns=LOS_100M_DELAY_NS,
    ray_idx=1,
    n_bounces=0,
    angles=("0", "0", "0", "0"),
    path_length_m="",
    interactions="",
):
    return ",".join(
        ["TX1", "RX1", str(ray_idx), gain_re, gain_im, delay_ns]
        + list(angles)
        + [str(n_bounces), path_length_m, interactions]
    )


def one_ray_csv_contents():
    """Gain 1+0j, 100 m delay, all angles 0, LOS."""
    return "\n".join([",".join(RAY_CSV_COLUMNS), ray_row()]) + "\n"


def one_ray_summary_contents(frequency_hz=60e9):
    return json.dumps({"TX1:RX1": {"p_tx_w": 1.0, "frequency_hz": frequency_hz}})


def two_ray_csv_contents():
    """|gain|^2 = {1, 3} and delay = {100, 200} ns."""
    return (
        "\n".join(
            [
                ",".join(RAY_CSV_COLUMNS),
                ray_row(delay_ns="100", ray_idx=1),
                ray_row(
                    gain_re="1.7320508075688772",
                    delay_ns="200",
                    ray_idx=2,
                    n_bounces=1,
                    angles=("10", "0", "170", "0"),
                ),
            ]
        )
        + "\n"
    )


def canyon_scene_json(prefix, make=False, **kwargs):
    u = os.path.join(prefix, "scene.json")
    if make:
        AbsPath(u).write(canyon_scene_contents(**kwargs))
    return u


def one_ray_csv(prefix, make=False, frequency_hz=60e9):
    """Also writes the summary sidecar one_ray.summary.json next to it."""
    u = os.path.join(prefix, "one_ray", "one_ray.csv")
    if make:
        AbsPath(u).write(one_ray_csv_contents())
        AbsPath(summary_path_for(u)).write(one_ray_summary_contents(frequency_hz))
    return u


def two_ray_csv(prefix, make=False):
    u = os.path.join(prefix, "two_ray.csv")
    if make:
        AbsPath(u).write(two_ray_csv_contents())
    return u
