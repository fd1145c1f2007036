#!/usr/bin/env python3
"""
Run the LAAT command line from a source checkout
"""

import sys
from pathlib import Path

# Add the current directory to Python path
current_dir = Path(__file__).parent
sys.path.insert(0, str(current_dir))

# Load environment variables
from dotenv import load_dotenv
load_dotenv()

from laat.main import main

if __name__ == "__main__":
    sys.exit(main())
