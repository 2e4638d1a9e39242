// CLI contract tests: subcommand behavior, exit codes, help text.
// argv[1] is the path to the fewfont binary.

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::string g_binary;

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
    std::string cmd = g_binary + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    RunResult r;
    if (!pipe) return r;
    std::array<char, 4096> buf;
    while (std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

void check(bool ok, const std::string& what) {
    if (!ok) {
        std::cerr << "FAIL: " << what << "\n";
        g_failures++;
    }
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: test_cli <fewfont binary>\n";
        return 2;
    }
    g_binary = argv[1];
    std::string table = FEWFONT_DATA_DIR "/sample_table.tsv";

    // the hand-run selection example
    RunResult sel = run("select-refs --table " + table + " --n-ref 3 --min-new 2");
    check(sel.exit_code == 0, "select-refs exits 0: " + sel.output);
    check(sel.output == "g1\ng3\ng5\n", "select-refs prints g1,g3,g5; got: " + sel.output);

    // missing table: exit 2, message names the path
    RunResult miss = run("select-refs --table /tmp/fewfont_missing_table.tsv --n-ref 3");
    check(miss.exit_code == 2, "missing table exits 2, got " + std::to_string(miss.exit_code));
    check(contains(miss.output, "/tmp/fewfont_missing_table.tsv"),
          "missing-table message names the path: " + miss.output);

    // unknown subcommand: usage text, exit 1
    RunResult unk = run("frobnicate");
    check(unk.exit_code == 1, "unknown subcommand exits 1, got " + std::to_string(unk.exit_code));
    check(contains(unk.output, "Usage") || contains(unk.output, "SUBCOMMAND"),
          "unknown subcommand prints usage: " + unk.output);

    // --help lists every subcommand; subcommand --help lists flags with defaults
    RunResult help = run("--help");
    check(help.exit_code == 0, "--help exits 0");
    for (const char* sub : {"decompose", "select-refs", "map-refs", "synth-data", "train",
                            "generate", "eval", "attn-viz"})
        check(contains(help.output, sub), std::string("--help lists ") + sub);
    RunResult thelp = run("train --help");
    check(thelp.exit_code == 0, "train --help exits 0");
    for (const char* flag : {"--data-dir", "--out-dir", "--iterations", "--batch-size", "--seed",
                             "--width-mult", "--heads", "--lr-g", "--lr-d", "--lambda-adv",
                             "--lambda-l1", "--no-sam", "--no-sr", "--no-rs"})
        check(contains(thelp.output, flag), std::string("train --help lists ") + flag);
    check(contains(thelp.output, "2000"), "train --help shows the iteration default");
    check(contains(thelp.output, "0.0002"), "train --help shows the generator lr default");

    // decompose shows the tree with levels
    RunResult dec = run("decompose --table " + table + " --glyph g25");
    check(dec.exit_code == 0, "decompose exits 0");
    check(contains(dec.output, "level 2"), "decompose prints levels: " + dec.output);
    check(contains(dec.output, "components:"), "decompose prints the component set");

    RunResult dec_bad = run("decompose --table " + table + " --glyph nope");
    check(dec_bad.exit_code == 2, "unknown glyph exits 2");

    // map-refs writes a mapping file
    fs::remove_all("/tmp/fewfont_cli_t");
    fs::create_directories("/tmp/fewfont_cli_t");
    RunResult mr = run("map-refs --table " + table +
                       " --n-ref 10 --min-new 2 --k 3 --out /tmp/fewfont_cli_t/map.tsv");
    check(mr.exit_code == 0, "map-refs exits 0: " + mr.output);
    check(fs::exists("/tmp/fewfont_cli_t/map.tsv"), "map-refs wrote the mapping");

    // synth-data creates the dataset layout
    RunResult sd = run("synth-data --table " + table +
                       " --out-dir /tmp/fewfont_cli_t/ds --size 32 --styles 2 --seed 1");
    check(sd.exit_code == 0, "synth-data exits 0: " + sd.output);
    for (const char* f : {"manifest.json", "meta.tsv", "mapping.tsv", "components.tsv",
                          "styles.tsv", "table.tsv", "images/neutral/g1.png",
                          "masks/s0/g1.png"})
        check(fs::exists(fs::path("/tmp/fewfont_cli_t/ds") / f),
              std::string("synth-data wrote ") + f);

    // config file: flags win over config values
    {
        std::FILE* cf = std::fopen("/tmp/fewfont_cli_t/conf.ini", "w");
        std::fputs("[select-refs]\ntable = \"" , cf);
        std::fputs(table.c_str(), cf);
        std::fputs("\"\nn-ref = 2\nmin-new = 2\n", cf);
        std::fclose(cf);
        RunResult cfgd = run("--config /tmp/fewfont_cli_t/conf.ini select-refs");
        check(cfgd.exit_code == 0, "config-driven select-refs exits 0: " + cfgd.output);
        check(cfgd.output == "g1\ng3\n", "config n-ref=2 applies: " + cfgd.output);
        RunResult cfgo = run("--config /tmp/fewfont_cli_t/conf.ini select-refs --n-ref 3");
        check(cfgo.output == "g1\ng3\ng5\n", "flag overrides config: " + cfgo.output);
    }

    fs::remove_all("/tmp/fewfont_cli_t");

    if (g_failures) {
        std::cerr << g_failures << " CLI checks failed\n";
        return 1;
    }
    std::cout << "all CLI checks passed\n";
    return 0;
}
