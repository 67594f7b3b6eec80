import sys

from medimark.cli import main

sys.exit(main())
