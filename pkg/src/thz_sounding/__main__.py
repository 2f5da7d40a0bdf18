"""Entry point for the thz-sounding CLI."""

from thz_sounding.cli import cli


def main():
    """Main entry point."""
    cli()


if __name__ == "__main__":
    main()
