from src.tpe_evo.cli import main


if __name__ == "__main__":
    raise SystemExit(main())
