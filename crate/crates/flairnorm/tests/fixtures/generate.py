#!/usr/bin/env python3
"""Regenerates the reference NIfTI fixtures in this directory.

The files are produced by packing the NIfTI-1 header field-by-field with
the struct module, following the layout published in the official
nifti1.h. This generator is deliberately independent of the Rust reader
so the fixtures act as a cross-implementation check.

Run from this directory: python3 generate.py
"""

import gzip
import struct


def nifti1_header(dim, pixdim, datatype, bitpix, scl_slope, scl_inter, endian="<"):
    # dim and pixdim are 8-element lists; datatype per the NIfTI-1 codes.
    hdr = b""
    hdr += struct.pack(endian + "i", 348)            # sizeof_hdr
    hdr += b"\x00" * 10                               # data_type (unused)
    hdr += b"\x00" * 18                               # db_name (unused)
    hdr += struct.pack(endian + "i", 0)               # extents
    hdr += struct.pack(endian + "h", 0)               # session_error
    hdr += b"\x00"                                    # regular
    hdr += b"\x00"                                    # dim_info
    hdr += struct.pack(endian + "8h", *dim)           # dim
    hdr += struct.pack(endian + "3f", 0.0, 0.0, 0.0)  # intent_p1..p3
    hdr += struct.pack(endian + "h", 0)               # intent_code
    hdr += struct.pack(endian + "h", datatype)        # datatype
    hdr += struct.pack(endian + "h", bitpix)          # bitpix
    hdr += struct.pack(endian + "h", 0)               # slice_start
    hdr += struct.pack(endian + "8f", *pixdim)        # pixdim
    hdr += struct.pack(endian + "f", 352.0)           # vox_offset
    hdr += struct.pack(endian + "f", scl_slope)       # scl_slope
    hdr += struct.pack(endian + "f", scl_inter)       # scl_inter
    hdr += struct.pack(endian + "h", 0)               # slice_end
    hdr += b"\x00"                                    # slice_code
    hdr += b"\x02"                                    # xyzt_units (mm)
    hdr += struct.pack(endian + "f", 0.0)             # cal_max
    hdr += struct.pack(endian + "f", 0.0)             # cal_min
    hdr += struct.pack(endian + "f", 0.0)             # slice_duration
    hdr += struct.pack(endian + "f", 0.0)             # toffset
    hdr += struct.pack(endian + "i", 0)               # glmax
    hdr += struct.pack(endian + "i", 0)               # glmin
    hdr += b"\x00" * 80                               # descrip
    hdr += b"\x00" * 24                               # aux_file
    hdr += struct.pack(endian + "h", 0)               # qform_code
    hdr += struct.pack(endian + "h", 0)               # sform_code
    hdr += struct.pack(endian + "6f", 0, 0, 0, 0, 0, 0)   # quatern b,c,d,x,y,z
    hdr += struct.pack(endian + "4f", 1, 0, 0, 0)     # srow_x
    hdr += struct.pack(endian + "4f", 0, 1, 0, 0)     # srow_y
    hdr += struct.pack(endian + "4f", 0, 0, 1, 0)     # srow_z
    hdr += b"\x00" * 16                               # intent_name
    hdr += b"n+1\x00"                                 # magic
    assert len(hdr) == 348, len(hdr)
    # single-file layout: 4-byte extension flag, all zero
    return hdr + b"\x00" * 4


def write_int16_scaled():
    # 4x4x4 int16 volume, raw values 0..63 (x-fastest), spacing
    # (0.8594, 0.8594, 3.0) mm, scl_slope=2, scl_inter=1.
    dim = [3, 4, 4, 4, 1, 1, 1, 1]
    pixdim = [1.0, 0.8594, 0.8594, 3.0, 0.0, 0.0, 0.0, 0.0]
    raw = list(range(64))

    le = nifti1_header(dim, pixdim, 4, 16, 2.0, 1.0, "<")
    le += struct.pack("<64h", *raw)
    with open("ref_int16_scaled.nii", "wb") as f:
        f.write(le)
    # gzip copy of the identical payload (mtime pinned for reproducibility)
    with open("ref_int16_scaled.nii.gz", "wb") as f:
        with gzip.GzipFile(fileobj=f, mode="wb", mtime=0) as gz:
            gz.write(le)

    # big-endian variant of the same volume
    be = nifti1_header(dim, pixdim, 4, 16, 2.0, 1.0, ">")
    be += struct.pack(">64h", *raw)
    with open("ref_int16_scaled_be.nii", "wb") as f:
        f.write(be)


if __name__ == "__main__":
    write_int16_scaled()
    print("fixtures written")
