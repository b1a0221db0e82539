"""Serve a fixture file over HTTP with the model wire contract.

Useful for exercising `bugcc run` against an http endpoint without a real
model server: point the fixture at a JSON file with completions/scores/
infills maps, start this, and reference the printed base_url from the run
config.
"""
import argparse
import sys

from bugcc.mockserver import make_server


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("fixture", help="mock fixture JSON file")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=0, help="0 picks a free port")
    args = parser.parse_args(argv)

    server, base_url = make_server(args.fixture, args.host, args.port)
    print(f"serving {args.fixture} at {base_url}")
    print("endpoint config snippet:")
    print("  [endpoints.completion]")
    print('  kind = "http"')
    print(f'  base_url = "{base_url}"')
    print("press Ctrl-C to stop")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("stopped")
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
