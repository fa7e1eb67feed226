from quantum_integration.cli import main

raise SystemExit(main())
