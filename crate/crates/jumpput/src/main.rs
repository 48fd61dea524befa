use jumpput::cli;

fn main() {
    std::process::exit(cli::run());
}
