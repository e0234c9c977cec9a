//! Static SVG bar chart of mean OWTA per group and track-length bucket.

use std::path::Path;

use crate::{write, CliError};

struct Bar {
    group: String,
    bucket: String,
    owta: f64,
}

fn parse_report(csv: &str) -> Result<Vec<Bar>, CliError> {
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or_default();
    if header != "group,bucket,alpha,DetRe,AssAcc,OWTA" {
        return Err(CliError::Data(format!("not a report CSV (header `{header}`)")));
    }
    let mut bars = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(CliError::Data(format!("report line {}: expected 6 fields", i + 2)));
        }
        if f[2] != "mean" {
            continue;
        }
        let owta: f64 = f[5]
            .parse()
            .map_err(|_| CliError::Data(format!("report line {}: bad OWTA `{}`", i + 2, f[5])))?;
        bars.push(Bar {
            group: f[0].to_string(),
            bucket: f[1].to_string(),
            owta,
        });
    }
    Ok(bars)
}

pub fn render_svg(csv: &str) -> Result<String, CliError> {
    let bars = parse_report(csv)?;
    let (bar_w, gap, height, top, bottom) = (28.0, 14.0, 220.0, 30.0, 60.0);
    let width = 40.0 + bars.len() as f64 * (bar_w + gap);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{:.0}\" font-family=\"sans-serif\" font-size=\"10\">\n",
        top + height + bottom
    );
    svg.push_str(&format!("<text x=\"10\" y=\"18\" font-size=\"13\">mean OWTA</text>\n"));
    svg.push_str(&format!(
        "<line x1=\"30\" y1=\"{:.1}\" x2=\"{width:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        top + height,
        top + height
    ));
    for (i, b) in bars.iter().enumerate() {
        let x = 40.0 + i as f64 * (bar_w + gap);
        let h = b.owta.clamp(0.0, 1.0) * height;
        let fill = match b.group.as_str() {
            "known" => "#4c78a8",
            "unknown" => "#f58518",
            _ => "#54a24b",
        };
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{bar_w}\" height=\"{h:.1}\" fill=\"{fill}\"/>\n",
            top + height - h
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.2}</text>\n",
            x + bar_w / 2.0,
            top + height - h - 3.0,
            b.owta
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            x + bar_w / 2.0,
            top + height + 14.0,
            b.group,
            x + bar_w / 2.0,
            top + height + 27.0,
            b.bucket
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn cmd_plot(report: &Path, out: &Path) -> Result<(), CliError> {
    let csv = std::fs::read_to_string(report).map_err(|e| slotrack::Error::io(report, e))?;
    write(out, &render_svg(&csv)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_bar_per_mean_row() {
        let csv = "group,bucket,alpha,DetRe,AssAcc,OWTA\nall,all,0.50,1,1,1\nall,all,mean,1,0.25,0.5\nknown,short,mean,0,0,0\n";
        let svg = render_svg(csv).unwrap();
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains(">0.50<"));
    }

    #[test]
    fn rejects_other_csv() {
        assert!(render_svg("a,b\n1,2\n").is_err());
    }
}
