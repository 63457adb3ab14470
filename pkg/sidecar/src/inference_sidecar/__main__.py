"""Launch the sidecar with the stub adapters (swap in real ones in code)."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app


def main() -> int:
    parser = argparse.ArgumentParser(prog="inference-sidecar")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8301)
    parser.add_argument("--token", help="require this bearer token on every endpoint")
    parser.add_argument("--embedding-dim", type=int, default=16)
    args = parser.parse_args()
    from .adapters import AdapterRegistry

    app = create_app(AdapterRegistry.stubs(dim=args.embedding_dim), token=args.token)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
