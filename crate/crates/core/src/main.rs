fn main() {
    std::process::exit(tweet_tone::cli::run_from(std::env::args_os()));
}
