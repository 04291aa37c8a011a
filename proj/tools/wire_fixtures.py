#!/usr/bin/env python3
"""Writes golden guidance-protocol messages with the Python stdlib only.

The C++ client is checked byte for byte against these files, so they are
produced independently of it. Run from the repository root:

    python3 tools/wire_fixtures.py tests/fixtures/wire
"""
import base64
import json
import struct
import sys
from pathlib import Path


def latent_a(c, y, x):
    return ((c * 37 + y * 11 + x * 7) % 101 - 50) / 3.0


def latent_b(c, y, x):
    return ((c * 13 + y * 29 + x * 5) % 97 - 48) / 7.0


def payload(fn, channels, height, width):
    values = [fn(c, y, x) for c in range(channels) for y in range(height) for x in range(width)]
    data = struct.pack("<%df" % len(values), *values)
    return {"shape": [channels, height, width], "dtype": "f32le", "data": base64.b64encode(data).decode("ascii")}


def dump(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


PNG_BYTES = bytes([0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A, 0x00, 0xFF, 0x10, 0x7F, 0x80])


def messages():
    return {
        "health_response.json": {"model": "stub-model"},
        "embed_request.json": {"prompt": "a person, side view"},
        "embed_response.json": {"prompt_id": "p-0001"},
        "denoise_request_small.json": {
            "prompt_id": "p-0001",
            "view_tag": "side",
            "t": 437,
            "guidance_scale": 100.0,
            "latent": payload(latent_a, 4, 3, 5),
        },
        "denoise_response_small.json": {"eps": payload(latent_b, 4, 3, 5)},
        "denoise_request_64.json": {
            "prompt_id": "p-0002",
            "view_tag": "front",
            "t": 20,
            "guidance_scale": 7.5,
            "latent": payload(latent_a, 4, 64, 64),
        },
        "decode_request_small.json": {"latent": payload(latent_b, 4, 3, 5)},
        "decode_response.json": {"png": base64.b64encode(PNG_BYTES).decode("ascii")},
    }


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/wire")
    out.mkdir(parents=True, exist_ok=True)
    for name, obj in messages().items():
        (out / name).write_bytes(dump(obj).encode("utf-8"))


if __name__ == "__main__":
    main()
