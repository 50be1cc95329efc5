#pragma once

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "levsq/errors.hpp"

namespace levsq {

// Buffered CSV assembly: rows accumulate in memory and reach the file (or
// stdout) only on flush, so a failed run leaves no partial output behind.
// Every document starts with a versioned schema comment line; column names
// carry their units.
class CsvWriter {
 public:
  CsvWriter(std::string schema, std::vector<std::string> columns)
      : columns_(std::move(columns)) {
    buf_ << "# levsqueeze-csv v1 " << schema << "\n";
    buf_.precision(17);
  }

  // Free-form comment line (metadata, notes); '#' prefix added here.
  void comment(const std::string& text) { buf_ << "# " << text << "\n"; }

  void begin_row() {
    if (!header_written_) write_header();
    first_field_ = true;
  }

  CsvWriter& field(double v) {
    sep();
    buf_ << v;
    return *this;
  }
  CsvWriter& field(int v) {
    sep();
    buf_ << v;
    return *this;
  }
  CsvWriter& field(long long v) {
    sep();
    buf_ << v;
    return *this;
  }
  CsvWriter& field(unsigned long long v) {
    sep();
    buf_ << v;
    return *this;
  }
  CsvWriter& field(const std::string& v) {
    sep();
    buf_ << v;
    return *this;
  }
  void end_row() { buf_ << "\n"; }

  // Writes the whole buffer; empty path means stdout.
  void flush(const std::string& path) {
    if (!header_written_) write_header();
    if (path.empty()) {
      std::cout << buf_.str();
      std::cout.flush();
      return;
    }
    std::ofstream out(path);
    if (!out) throw config_error("cannot open output file: " + path);
    out << buf_.str();
    if (!out) throw config_error("failed writing output file: " + path);
  }

  std::string str() const { return buf_.str(); }

 private:
  void write_header() {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (i) buf_ << ",";
      buf_ << columns_[i];
    }
    buf_ << "\n";
    header_written_ = true;
  }
  void sep() {
    if (!first_field_) buf_ << ",";
    first_field_ = false;
  }

  std::vector<std::string> columns_;
  std::ostringstream buf_;
  bool header_written_ = false;
  bool first_field_ = true;
};

}  // namespace levsq
