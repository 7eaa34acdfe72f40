"""Protocol test child: responds rho = theta[0] to each request, in order."""

import json
import sys

for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "rho": req["theta"][0]}), flush=True)
