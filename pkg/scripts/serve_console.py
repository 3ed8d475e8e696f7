#!/usr/bin/env python3
"""Start the live simulation bridge for the browser console.

Serve the frontend separately, e.g.  cd frontend && python3 -m http.server 8080
then open http://localhost:8080 and it connects to this bridge.
"""

import sys

from hpa_sim.bridge import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
