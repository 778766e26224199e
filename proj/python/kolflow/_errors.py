"""Exception type raised for every engine error."""

import json


class KolflowError(Exception):
    """An engine error carrying its stable API code and optional details."""

    def __init__(self, code: str, message: str, details: str = ""):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.details = json.loads(details) if details else None
