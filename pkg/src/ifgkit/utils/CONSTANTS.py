import os

IFGKIT_BASE_DIR = os.path.abspath(
    os.path.join(os.path.dirname(__file__), '..')
)

REPO_ROOT = os.path.abspath(
    os.path.join(IFGKIT_BASE_DIR, '..', '..')
)

DEFAULT_OUT_DIR = os.path.join(REPO_ROOT, 'out')

ERROR_FILENAME = 'error.txt'

CHECKPOINT_FILENAME = 'checkpoint.ifgk'

LOSS_LOG_FILENAME = 'loss_log.csv'

AP_CSV_FILENAME = 'ap.csv'

ABLATION_CSV_FILENAME = 'ablation.csv'
