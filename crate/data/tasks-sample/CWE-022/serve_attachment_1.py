def read_attachment(filename):
    '''
    Return the contents of the named attachment from the uploads
    directory.
    '''
