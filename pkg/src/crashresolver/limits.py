"""Operational limits shared across modules.

These caps and budgets shape every tool result the agent sees; keeping them
in one place makes the knobs auditable.
"""

# Result cap for definition lookups, code search, and commit search.
MAX_RESULTS = 5

# Lines of context shown before and after each code search match.
CONTEXT_LINES = 2

# A commit's patch excerpt is cut at this many lines.
COMMIT_DIFF_MAX_LINES = 100

# Wall-clock timeout for one history scan (commit search).
HISTORY_SCAN_TIMEOUT = 60.0

# Safety timeout for snapshot code search; generous since snapshots are bounded.
CODE_SCAN_TIMEOUT = 30.0

# Prompt assembly budget in estimated tokens.
TOKEN_BUDGET = 50_000

# Patch generation temperature ladder and attempt cap.
SYNTHESIS_TEMPERATURES = (0.0, 0.3, 0.6)
MAX_PATCH_ATTEMPTS = 3

# Analysis loop defaults.
DEFAULT_MAX_CALLS = 15
ANALYSIS_TEMPERATURE = 0.6

# Validation defaults: reproducer window and concurrent instances.
REPRODUCE_TIMEOUT = 600.0
PARALLEL_REPRODUCERS = 4
