fn main() -> anyhow::Result<()> {
    splap_cli::run()
}
