from .needle import main

raise SystemExit(main())
